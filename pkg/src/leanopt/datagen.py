"""Parameter imputation for authoring benchmark instances.

NRM demand and inventory from sales records, transportation cost matrices from
coordinates, and facility setup costs. Every generator takes an explicit
:class:`RngSpec`, so the same spec always reproduces the same CSV bytes.
"""
from __future__ import annotations

import csv
import io
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .retrieval import CsvTable, read_csv

EARTH_RADIUS_MILES = 3958.7613
NRM_HEADER = ("Product Name", "Revenue", "Demand", "Initial Inventory")
SALES_COLUMNS = ("Product id", "Units sold", "Unit sellingPrice")
DEMAND_FACTOR = (1.2, 1.5)
SETUP_COST_RANGE = (10000, 50000)

_BIT_GENERATORS = {"PCG64": np.random.PCG64, "PCG64DXSM": np.random.PCG64DXSM, "Philox": np.random.Philox,
                   "SFC64": np.random.SFC64, "MT19937": np.random.MT19937}


class DataGenWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RngSpec:
    """Seed plus bit-generator name; ``stream`` is a spawn key for independent substreams."""

    seed: int = 42
    algorithm: str = "PCG64"
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.algorithm not in _BIT_GENERATORS:
            raise ValueError(f"unknown RNG algorithm {self.algorithm!r}; choose from {sorted(_BIT_GENERATORS)}")

    def child(self, k: int) -> "RngSpec":
        return RngSpec(self.seed, self.algorithm, self.stream + (int(k),))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=self.stream)
        return np.random.Generator(_BIT_GENERATORS[self.algorithm](seq))


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Plain CSV with ``\\n`` line endings and shortest round-trip float text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(c) for c in r])
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(buf.getvalue().encode("utf-8"))
    return p


# --------------------------------------------------------------------------- NRM


@dataclass(frozen=True)
class SalesRecord:
    product: str
    units_sold: int
    unit_price: float


@dataclass(frozen=True)
class NrmRow:
    product: str
    revenue: float
    demand: int
    initial_inventory: int

    def as_row(self) -> tuple:
        return (self.product, self.revenue, self.demand, self.initial_inventory)


def _units(value) -> int:
    u = float(value)
    if not math.isfinite(u) or not u.is_integer():
        raise ValueError(f"units sold must be an integer, got {value!r}")
    if u < 0:
        raise ValueError(f"units sold must be non-negative, got {value!r}")
    return int(u)


def round_up_to_ten(x: int) -> int:
    return -(-int(x) // 10) * 10


def gen_nrm(records: Sequence[SalesRecord | tuple], rng: RngSpec = RngSpec()) -> list[NrmRow]:
    """Demand = ceil(u*k) with k ~ U(1.2, 1.5) per product; inventory = 10u rounded up to a multiple of 10."""
    gen = rng.generator()
    out = []
    for rec in records:
        product, units, price = rec if isinstance(rec, tuple) else (rec.product, rec.units_sold, rec.unit_price)
        u = _units(units)
        k = gen.uniform(*DEMAND_FACTOR)
        out.append(NrmRow(str(product), float(price), math.ceil(u * k), round_up_to_ten(10 * u)))
    return out


def read_sales(path: str | os.PathLike) -> list[SalesRecord]:
    table = read_csv(path)
    missing = [c for c in SALES_COLUMNS if c not in table.header]
    if missing:
        raise ValueError(f"{table.name} lacks column(s): {', '.join(missing)}")
    cols = [table.header.index(c) for c in SALES_COLUMNS]
    return [SalesRecord(r[cols[0]], _units(r[cols[1]]), float(r[cols[2]])) for r in table.rows]


def write_nrm_csv(rows: Sequence[NrmRow], path: str | os.PathLike) -> Path:
    return write_csv(path, NRM_HEADER, (r.as_row() for r in rows))


# --------------------------------------------------------------------------- TP / FLP


def haversine_miles(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance between two (lat, lon) points in degrees."""
    for lat, lon in (a, b):
        if not (math.isfinite(lat) and math.isfinite(lon)) or abs(lat) > 90 or abs(lon) > 180:
            raise ValueError(f"coordinate out of range: ({lat}, {lon})")
    p1, p2 = math.radians(a[0]), math.radians(b[0])
    dphi = p2 - p1
    dlam = math.radians(b[1] - a[1])
    h = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_MILES * math.asin(min(1.0, math.sqrt(h)))


@dataclass(frozen=True)
class Location:
    name: str
    lat: float
    lon: float


@dataclass
class TransportCosts:
    suppliers: list[str]
    customers: list[str]
    matrix: np.ndarray  # suppliers x customers

    def rows(self) -> list[tuple]:
        return [(s, *self.matrix[i]) for i, s in enumerate(self.suppliers)]

    def write_csv(self, path: str | os.PathLike, corner: str = "Supplier") -> Path:
        return write_csv(path, (corner, *self.customers), self.rows())


def gen_tp_costs(locations: Sequence[Location | tuple], cost_per_mile: Sequence[float],
                 rng: RngSpec = RngSpec()) -> TransportCosts:
    """Shuffle, split in halves (suppliers first), cost = distance x a uniformly drawn per-mile rate."""
    locs = [l if isinstance(l, Location) else Location(str(l[0]), float(l[1]), float(l[2])) for l in locations]
    if len(locs) < 2:
        raise ValueError("need at least two locations")
    if not len(cost_per_mile):
        raise ValueError("cost_per_mile is empty")
    names = [l.name for l in locs]
    if len(set(names)) != len(names):
        raise ValueError("location names must be unique")
    gen = rng.generator()
    order = gen.permutation(len(locs))
    shuffled = [locs[k] for k in order]
    half = len(shuffled) // 2
    sup, cus = shuffled[:half], shuffled[half:]
    rates = np.asarray(cost_per_mile, dtype=float)
    m = np.zeros((len(sup), len(cus)))
    for i, s in enumerate(sup):
        for j, c in enumerate(cus):
            m[i, j] = haversine_miles((s.lat, s.lon), (c.lat, c.lon)) * rates[gen.integers(len(rates))]
    return TransportCosts([s.name for s in sup], [c.name for c in cus], m)


def customer_demand(costs: TransportCosts, demand: Mapping[str, float]) -> tuple[TransportCosts, list[tuple[str, float]], list[str]]:
    """Demand rows in matrix column order.

    Customers without a demand record are dropped from the matrix, with a warning.
    Returns (trimmed costs, [(region, demand)], dropped regions).
    """
    keep = [j for j, c in enumerate(costs.customers) if c in demand]
    dropped = [c for c in costs.customers if c not in demand]
    if dropped:
        warnings.warn(f"no demand record for region(s) {', '.join(dropped)}; dropped", DataGenWarning, stacklevel=2)
    trimmed = TransportCosts(list(costs.suppliers), [costs.customers[j] for j in keep], costs.matrix[:, keep])
    return trimmed, [(c, demand[c]) for c in trimmed.customers], dropped


def gen_flp_setup_costs(n: int, cost_range: tuple[int, int] = SETUP_COST_RANGE,
                        rng: RngSpec = RngSpec()) -> list[int]:
    """n independent uniform integers in the closed range."""
    if n < 0:
        raise ValueError("n must be non-negative")
    lo, hi = cost_range
    if int(lo) != lo or int(hi) != hi or lo > hi:
        raise ValueError(f"cost range must be integers with lo <= hi, got {cost_range}")
    if n == 0:
        return []
    return [int(x) for x in rng.generator().integers(int(lo), int(hi), size=n, endpoint=True)]


@dataclass
class LocationTable:
    locations: list[Location]
    demand: dict[str, float] = field(default_factory=dict)


def read_locations(path: str | os.PathLike, name: str = "region", lat: str = "latitude", lon: str = "longitude",
                   demand: Optional[str] = "demand") -> LocationTable:
    table: CsvTable = read_csv(path)
    lower = {h.lower(): k for k, h in enumerate(table.header)}
    try:
        kn, ka, ko = lower[name.lower()], lower[lat.lower()], lower[lon.lower()]
    except KeyError as exc:
        raise ValueError(f"{table.name} lacks column {exc.args[0]!r}") from None
    kd = lower.get(demand.lower()) if demand else None
    locs = [Location(r[kn], float(r[ka]), float(r[ko])) for r in table.rows]
    dem = {r[kn]: float(r[kd]) for r in table.rows if kd is not None and r[kd].strip()}
    return LocationTable(locs, dem)
