"""Choice-based airline revenue management under the general attraction model.

GAM purchase probabilities, the sales-based LP (one continuous sales variable
per product plus a no-purchase variable per market segment) and the network
planning MILP that also picks which flights to operate.

CSV inputs (one directory)::

    flight.csv      OD, Departure Time, Fare type, Avg Price, Capacity[, Capacity Coef]
    od_demand.csv   OD, Avg Pax
    v1.csv          OD Pairs, <fare>* (<window>) ..., No Purchase
    v2.csv          OD Pairs, <fare>* (<window>) ...     (absolute w, or w/v ratios)

Window headers look like ``Eco-lite* (10pm-8am)``; a departure takes the
attraction of the window that contains it, windows may wrap past midnight.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .model import BINARY, CONTINUOUS, EQ, LE, MAXIMIZE, Constraint, LinearExpr, LinearModel, Variable
from .retrieval import CsvTable, read_csv

FILES = {"flights": "flight.csv", "demand": "od_demand.csv", "v1": "v1.csv", "v2": "v2.csv"}
ABSOLUTE, RATIO = "absolute", "ratio"


class SblpDataError(ValueError):
    pass


class BigMError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    od: tuple[str, str]
    demand: float  # aggregate demand Lambda
    v0: float = 1.0

    def __post_init__(self):
        if not self.demand >= 0:
            raise SblpDataError(f"segment {self.id}: demand must be non-negative, got {self.demand}")
        if not self.v0 > 0:
            raise SblpDataError(f"segment {self.id}: no-purchase attraction must be positive, got {self.v0}")

    @property
    def id(self) -> str:
        return f"{self.od[0]}-{self.od[1]}"


@dataclass(frozen=True)
class ProductOption:
    segment: str
    departure: str
    fare: str
    price: float
    v: float
    w: float = 0.0
    consumption: float = 1.0

    def __post_init__(self):
        if not self.v > 0:
            raise SblpDataError(f"{self.label}: attraction must be positive, got {self.v}")
        if not 0 <= self.w <= self.v:
            raise SblpDataError(f"{self.label}: shadow attraction {self.w} outside [0, {self.v}]")
        if not self.price >= 0:
            raise SblpDataError(f"{self.label}: negative price {self.price}")
        if not self.consumption > 0:
            raise SblpDataError(f"{self.label}: capacity consumption must be positive")

    @property
    def flight(self) -> tuple[str, str]:
        return (self.segment, self.departure)

    @property
    def v_tilde(self) -> float:
        return self.v - self.w

    @property
    def label(self) -> str:
        return f"{self.segment} {self.departure} {self.fare}"


def _ident(*parts: str) -> str:
    return "_".join(re.sub(r"[^A-Za-z0-9]", "", p) for p in parts)


@dataclass
class GamInstance:
    segments: list[Segment]
    options: list[ProductOption]
    capacity: dict[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        ids = [s.id for s in self.segments]
        if len(set(ids)) != len(ids):
            raise SblpDataError("duplicate segment")
        known = set(ids)
        seen = set()
        for o in self.options:
            if o.segment not in known:
                raise SblpDataError(f"{o.label}: undeclared segment {o.segment!r}")
            key = (o.segment, o.departure, o.fare)
            if key in seen:
                raise SblpDataError(f"{o.label}: listed twice")
            seen.add(key)

    def segment(self, sid: str) -> Segment:
        for s in self.segments:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def options_of(self, sid: str) -> list[ProductOption]:
        return [o for o in self.options if o.segment == sid]

    def flights(self) -> list[tuple[str, str]]:
        out: list[tuple[str, str]] = []
        for o in self.options:
            if o.flight not in out:
                out.append(o.flight)
        return out

    @property
    def airports(self) -> list[str]:
        return sorted({a for s in self.segments for a in s.od})

    def inbound(self, airport: str, flights: Iterable[tuple[str, str]]) -> list[tuple[str, str]]:
        return [f for f in flights if self.segment(f[0]).od[1] == airport]

    def outbound(self, airport: str, flights: Iterable[tuple[str, str]]) -> list[tuple[str, str]]:
        return [f for f in flights if self.segment(f[0]).od[0] == airport]

    def with_consumption(self, by_fare: Mapping[str, float]) -> "GamInstance":
        """Copy with capacity consumption overridden per fare type (matched case-insensitively)."""
        lower = {k.lower(): float(v) for k, v in by_fare.items()}
        opts = [ProductOption(o.segment, o.departure, o.fare, o.price, o.v, o.w,
                              lower.get(o.fare.lower(), o.consumption)) for o in self.options]
        return GamInstance(list(self.segments), opts, dict(self.capacity))


# --------------------------------------------------------------------------- choice model


def gam_probabilities(segment: Segment, offered: Sequence[ProductOption],
                      universe: Sequence[ProductOption] = ()) -> tuple[list[float], float]:
    """Purchase probabilities of the offered products and the no-purchase probability.

    Shadow attraction of every product in ``universe`` (offered ones included)
    feeds the no-purchase weight; an offered product keeps v - w of its own.
    """
    everything = list(universe) + [o for o in offered if o not in universe]
    v0_tilde = segment.v0 + sum(o.w for o in everything)
    denom = v0_tilde + sum(o.v_tilde for o in offered)
    pis = [o.v / denom for o in offered]
    # v0 plus the shadow weight of products that are not offered
    pi0 = (segment.v0 + sum(o.w for o in everything if o not in offered)) / denom
    return pis, pi0


# --------------------------------------------------------------------------- builders


def _pick(instance: GamInstance, flights: Optional[Iterable[tuple[str, str]]]) -> tuple[list[tuple[str, str]], list[ProductOption]]:
    available = instance.flights()
    if flights is None:
        chosen = available
    else:
        chosen = []
        for f in flights:
            f = (f[0], f[1])
            if f not in available:
                raise SblpDataError(f"no options for flight {f[0]} at {f[1]}")
            if f not in chosen:
                chosen.append(f)
    opts = [o for o in instance.options if o.flight in chosen]
    if not opts:
        raise SblpDataError("no flights selected")
    return chosen, opts


def x_name(o: ProductOption) -> str:
    return "x_" + _ident(o.segment, o.departure, o.fare)


def x0_name(sid: str) -> str:
    return "x0_" + _ident(sid)


def y_name(flight: tuple[str, str]) -> str:
    return "y_" + _ident(*flight)


def _sblp_parts(instance: GamInstance, flights, opts) -> tuple[list[Variable], list[Constraint], LinearExpr]:
    segs = [s for s in instance.segments if any(o.segment == s.id for o in opts)]
    variables = [Variable(x_name(o)) for o in opts] + [Variable(x0_name(s.id)) for s in segs]
    rows: list[Constraint] = []
    for f in flights:
        if f not in instance.capacity:
            raise SblpDataError(f"missing capacity for flight {f[0]} at {f[1]}")
        terms = tuple((o.consumption, x_name(o)) for o in opts if o.flight == f)
        rows.append(Constraint("cap_" + _ident(*f), LinearExpr(terms), LE, float(instance.capacity[f])))
    for s in segs:
        # shadow weight counts every product of the segment, offered or not
        v0_tilde = s.v0 + sum(o.w for o in instance.options_of(s.id))
        terms = [(v0_tilde / s.v0, x0_name(s.id))]
        terms += [(o.v_tilde / o.v, x_name(o)) for o in opts if o.segment == s.id]
        rows.append(Constraint("balance_" + _ident(s.id), LinearExpr(tuple(terms)), EQ, float(s.demand)))
    for o in opts:
        s = instance.segment(o.segment)
        rows.append(Constraint("scale_" + x_name(o)[2:],
                               LinearExpr(((1.0 / o.v, x_name(o)), (-1.0 / s.v0, x0_name(s.id)))), LE, 0.0))
    objective = LinearExpr(tuple((o.price, x_name(o)) for o in opts))
    return variables, rows, objective


def build_sblp(instance: GamInstance, flights: Optional[Iterable[tuple[str, str]]] = None) -> LinearModel:
    """Sales-based LP over the options of the selected flights (all flights by default).

    Only segments with at least one selected option get a no-purchase variable
    and a balance row.
    """
    chosen, opts = _pick(instance, flights)
    variables, rows, objective = _sblp_parts(instance, chosen, opts)
    return LinearModel(MAXIMIZE, objective, variables, rows, {"builder": "sblp"})


def choose_big_m(segment: Segment, options: Sequence[ProductOption], fallback: Optional[float] = None) -> float:
    """Upper bound on any one product's sales in the segment.

    The balance row gives (v~/v)·x <= Lambda for every product, so
    x <= Lambda·v/v~ <= Lambda·max(1, v_max / v~_min). When some product has
    w = v that bound does not exist and ``fallback`` is used.
    """
    if not options:
        return float(segment.demand)
    vt_min = min(o.v_tilde for o in options)
    if vt_min <= 0:
        if fallback is None:
            raise BigMError(f"segment {segment.id}: a product has w = v, supply an explicit big-M")
        return float(fallback)
    return float(segment.demand) * max(1.0, max(o.v for o in options) / vt_min)


def build_network_planning(instance: GamInstance, candidates: Optional[Iterable[tuple[str, str]]] = None,
                           max_flights: int = 1, big_m: float | Mapping[tuple[str, str], float] | None = None,
                           ) -> LinearModel:
    """SBLP plus a binary open/close decision per candidate flight.

    Rows added: x <= M·y for every option, sum(y) <= Z, and at each airport the
    number of selected inbound flights equals the selected outbound ones.
    Airports without candidate flights get no flow row. Without an explicit
    ``big_m`` each option uses the smaller of :func:`choose_big_m` and its
    capacity bound c / A.
    """
    if max_flights < 1:
        raise ValueError("the flight count limit must be at least 1")
    chosen, opts = _pick(instance, candidates)
    variables, rows, objective = _sblp_parts(instance, chosen, opts)
    variables += [Variable(y_name(f), 0.0, 1.0, BINARY) for f in chosen]
    for o in opts:
        if big_m is None:
            # the capacity row alone also caps x at c / A, usually far tighter
            s = instance.segment(o.segment)
            m = min(choose_big_m(s, instance.options_of(s.id)), instance.capacity[o.flight] / o.consumption)
        elif isinstance(big_m, Mapping):
            m = float(big_m[o.flight])
        else:
            m = float(big_m)
        rows.append(Constraint("link_" + x_name(o)[2:],
                               LinearExpr(((1.0, x_name(o)), (-m, y_name(o.flight)))), LE, 0.0))
    rows.append(Constraint("cardinality", LinearExpr(tuple((1.0, y_name(f)) for f in chosen)), LE, float(max_flights)))
    for a in instance.airports:
        inn, out = instance.inbound(a, chosen), instance.outbound(a, chosen)
        if not inn and not out:
            continue
        coefs: dict[str, float] = {}
        for f in inn:
            coefs[y_name(f)] = coefs.get(y_name(f), 0.0) + 1.0
        for f in out:
            coefs[y_name(f)] = coefs.get(y_name(f), 0.0) - 1.0
        rows.append(Constraint("flow_" + _ident(a), LinearExpr.from_dict(coefs), EQ, 0.0))
    return LinearModel(MAXIMIZE, objective, variables, rows, {"builder": "network_planning"})


# --------------------------------------------------------------------------- CSV loading


def parse_od(text: str) -> tuple[str, str]:
    """``(A,B)``, ``('A', 'B')``, ``A-B`` or ``A->B``."""
    parts = re.findall(r"[A-Za-z0-9]+", text)
    if len(parts) != 2:
        raise SblpDataError(f"cannot read an origin-destination pair from {text!r}")
    return parts[0], parts[1]


def _clock(text: str) -> float:
    m = re.fullmatch(r"\s*(\d{1,2})(?::(\d{2}))?\s*", text)
    if not m or int(m.group(1)) > 23 or int(m.group(2) or 0) > 59:
        raise SblpDataError(f"bad departure time {text!r}")
    return int(m.group(1)) + int(m.group(2) or 0) / 60


def _hour12(h: str, suffix: str) -> float:
    x = int(h) % 12
    return x + 12 if suffix == "pm" else x


@dataclass(frozen=True)
class FareWindow:
    fare: str
    start: float  # hours, inclusive
    end: float  # hours, exclusive; may be <= start for windows past midnight

    def contains(self, hour: float) -> bool:
        if self.start < self.end:
            return self.start <= hour < self.end
        return hour >= self.start or hour < self.end


_WINDOW = re.compile(r"^\s*(.+?)\*?\s*\(\s*(\d{1,2})\s*(am|pm)?\s*-\s*(\d{1,2})\s*(am|pm)\s*\)\s*$", re.I)


def parse_window(header: str) -> FareWindow:
    """``Eco-flexi* (12-6pm)`` -> FareWindow('Eco-flexi', 12, 18); a missing first suffix copies the second."""
    m = _WINDOW.match(header)
    if not m:
        raise SblpDataError(f"column {header!r} is not a fare window")
    fare, h1, s1, h2, s2 = m.groups()
    s2 = s2.lower()
    return FareWindow(fare.strip().rstrip("*").strip(), _hour12(h1, (s1 or s2).lower()), _hour12(h2, s2))


def _table(directory: Path, key: str, files: Mapping[str, str]) -> CsvTable:
    path = directory / files[key]
    if not path.is_file():
        raise SblpDataError(f"missing input file {files[key]} in {directory}")
    return read_csv(path)


def _col(table: CsvTable, *names: str, required: bool = True) -> Optional[int]:
    norm = {re.sub(r"[^a-z0-9]", "", h.lower()): k for k, h in enumerate(table.header)}
    for n in names:
        k = norm.get(re.sub(r"[^a-z0-9]", "", n.lower()))
        if k is not None:
            return k
    if required:
        raise SblpDataError(f"{table.name} lacks column {names[0]!r}")
    return None


def _num(cell: str, where: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise SblpDataError(f"{where}: {cell!r} is not a number") from None


def _window_table(table: CsvTable) -> tuple[int, dict[str, list[tuple[FareWindow, dict[str, float]]]]]:
    """Per OD: list of (window, value) for every fare-window column."""
    kod = _col(table, "OD Pairs", "OD")
    windows = [(k, parse_window(h)) for k, h in enumerate(table.header) if _WINDOW.match(h)]
    if not windows:
        raise SblpDataError(f"{table.name} has no fare window columns")
    out: dict[str, list] = {}
    for r in table.rows:
        sid = "-".join(parse_od(r[kod]))
        out[sid] = [(win, _num(r[k], f"{table.name} {sid} {table.header[k]}")) for k, win in windows]
    return kod, out


def _lookup(windows, fare: str, hour: float, where: str) -> float:
    for win, value in windows:
        if win.fare.lower() == fare.lower() and win.contains(hour):
            return value
    raise SblpDataError(f"{where}: no {fare} window covers the departure time")


def load_instance(directory: str | os.PathLike, shadow_mode: str = ABSOLUTE,
                  consumption: Optional[Mapping[str, float]] = None,
                  files: Optional[Mapping[str, str]] = None) -> GamInstance:
    """Read the four CSV inputs. ``shadow_mode`` says whether v2 holds w itself or w/v."""
    if shadow_mode not in (ABSOLUTE, RATIO):
        raise ValueError(f"shadow_mode must be {ABSOLUTE!r} or {RATIO!r}")
    d = Path(directory)
    names = dict(FILES, **(files or {}))
    flights, demand = _table(d, "flights", names), _table(d, "demand", names)
    v1, v2 = _table(d, "v1", names), _table(d, "v2", names)

    kod, kpax = _col(demand, "OD"), _col(demand, "Avg Pax", "Demand")
    _, attraction = _window_table(v1)
    _, shadow = _window_table(v2)
    knp = _col(v1, "No Purchase", required=False)
    kv1 = _col(v1, "OD Pairs", "OD")
    v0 = {"-".join(parse_od(r[kv1])): (_num(r[knp], "No Purchase") if knp is not None else 1.0) for r in v1.rows}
    segments = []
    for r in demand.rows:
        od = parse_od(r[kod])
        sid = "-".join(od)
        segments.append(Segment(od, _num(r[kpax], f"{demand.name} {sid}"), v0.get(sid, 1.0)))

    fo, ft, ff = _col(flights, "OD"), _col(flights, "Departure Time"), _col(flights, "Fare type")
    fp, fc = _col(flights, "Avg Price", "Price"), _col(flights, "Capacity")
    fa = _col(flights, "Capacity Coef", "Flex Cpy Coef", "Consumption", required=False)
    options, capacity = [], {}
    for r in flights.rows:
        sid = "-".join(parse_od(r[fo]))
        dep, fare = r[ft].strip(), r[ff].strip()
        where = f"{flights.name} {sid} {dep} {fare}"
        if sid not in attraction:
            raise SblpDataError(f"{where}: OD missing from {v1.name}")
        if sid not in shadow:
            raise SblpDataError(f"{where}: OD missing from {v2.name}")
        hour = _clock(dep)
        v = _lookup(attraction[sid], fare, hour, f"{v1.name} {where}")
        w = _lookup(shadow[sid], fare, hour, f"{v2.name} {where}")
        if shadow_mode == RATIO:
            w *= v
        a = _num(r[fa], where) if fa is not None and r[fa].strip() else 1.0
        cap = _num(r[fc], where)
        if capacity.setdefault((sid, dep), cap) != cap:
            raise SblpDataError(f"{where}: capacity differs between fare rows of one flight")
        options.append(ProductOption(sid, dep, fare, _num(r[fp], where), v, w, a))
    inst = GamInstance(segments, options, capacity)
    return inst.with_consumption(consumption) if consumption else inst


_FLIGHT_FILTER = re.compile(r"OD\s*=\s*(\([^)]*\))\s*AND\s*Departure\s*Time\s*=\s*[`'\"‘’]?(\d{1,2}:\d{2})", re.I)


def parse_flight_filter(text: str) -> list[tuple[str, str]]:
    """Flights named in a query as ``(OD = ('A', 'B') AND Departure Time='11:20')``."""
    return [("-".join(parse_od(od)), t) for od, t in _FLIGHT_FILTER.findall(text)]
