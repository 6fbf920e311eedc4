"""CPLEX-style LP file reading and writing."""
from __future__ import annotations

import math
import re
from typing import Optional

from .ir import BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, MAXIMIZE, MINIMIZE
from .ir import Constraint, LinearExpr, LinearModel, Variable, ModelError, ensure_valid


class LPParseError(ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


def _num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _terms(expr: LinearExpr) -> str:
    parts = []
    for k, (c, v) in enumerate(expr.terms):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = v if mag == 1 else f"{_num(mag)} {v}"
        if k == 0:
            parts.append(body if sign == "+" else f"- {body}")
        else:
            parts.append(f"{sign} {body}")
    return " ".join(parts) if parts else "0"


def write_lp(model: LinearModel) -> str:
    ensure_valid(model)
    out = []
    if model.metadata.get("name"):
        out.append(f"\\ {model.metadata['name']}")
    out.append("Maximize" if model.sense == MAXIMIZE else "Minimize")
    obj = _terms(model.objective.normalized())
    c = model.objective.constant
    if c:
        obj += f" {'+' if c > 0 else '-'} {_num(abs(c))}"
    out.append(f" obj: {obj}")
    out.append("Subject To")
    for con in model.constraints:
        e = con.expr.normalized()
        rhs = con.rhs - e.constant
        if e.terms:
            lhs = _terms(LinearExpr(e.terms))
        else:
            # an all-zero row keeps one explicit zero term so the reader sees a variable
            anchor = (con.expr.terms or model.objective.terms or ((0.0, model.variables[0].name),))[0][1]
            lhs = f"0 {anchor}"
        out.append(f" {con.name}: {lhs} {con.sense} {_num(rhs)}")
    out.append("Bounds")
    for v in model.variables:
        if v.kind == BINARY and v.lower == 0 and v.upper == 1:
            continue
        lo, hi = v.lower, v.upper
        if lo == -math.inf and hi == math.inf:
            out.append(f" {v.name} free")
        elif hi == math.inf:
            out.append(f" {v.name} >= {_num(lo)}" if lo != -math.inf else f" {v.name} free")
        elif lo == -math.inf:
            out.append(f" -inf <= {v.name} <= {_num(hi)}")
        else:
            out.append(f" {_num(lo)} <= {v.name} <= {_num(hi)}")
    ints = [v.name for v in model.variables if v.kind == INTEGER]
    bins = [v.name for v in model.variables if v.kind == BINARY]
    if ints:
        out.append("Generals")
        out.extend(f" {n}" for n in ints)
    if bins:
        out.append("Binaries")
        out.extend(f" {n}" for n in bins)
    out.append("End")
    return "\n".join(out) + "\n"


_SECTIONS = [
    (re.compile(r"^(maximize|maximise|maximum|max)$", re.I), "max"),
    (re.compile(r"^(minimize|minimise|minimum|min)$", re.I), "min"),
    (re.compile(r"^(subject\s+to|such\s+that|st|s\.t\.)$", re.I), "st"),
    (re.compile(r"^bounds?$", re.I), "bounds"),
    (re.compile(r"^(generals?|gen|integers?)$", re.I), "gen"),
    (re.compile(r"^(binary|binaries|bin)$", re.I), "bin"),
    (re.compile(r"^end$", re.I), "end"),
]

_TOK = re.compile(r"\s*(?:(?P<num>[0-9]*\.?[0-9]+(?:[eE][+-]?\d+)?|inf(?:inity)?\b)|(?P<op><=|>=|=<|=>|<|>|=)|(?P<sign>[+-])|(?P<name>[A-Za-z_][A-Za-z0-9_.\[\]#{}~!@$%^&]*))", re.I)
_NAME = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_.\[\]#{}~!@$%^&]*)\s*:(?!=)")


_COMPLETE = re.compile(r"(<=|>=|=<|=>|<|>|=)\s*[+-]?\s*(\d*\.?\d+(e[+-]?\d+)?|inf(inity)?)\s*$", re.I)


def _section_of(line: str) -> Optional[str]:
    s = line.strip()
    for pat, key in _SECTIONS:
        if pat.match(s):
            return key
    return None


def _parse_linear(text: str, lineno: int):
    """Parse 'a x + b y ... [op rhs]'; returns (coefs, constant, op, rhs)."""
    pos = 0
    coefs: dict[str, float] = {}
    const = 0.0
    sign = 1.0
    coef: Optional[float] = None
    op = rhs = None
    seen_term = False
    while pos < len(text):
        if not text[pos:].strip():
            break
        m = _TOK.match(text, pos)
        if not m:
            raise LPParseError(f"unexpected text {text[pos:].strip()[:20]!r}", lineno)
        pos = m.end()
        if m.group("sign"):
            sign = -sign if m.group("sign") == "-" else sign
            continue
        if m.group("num"):
            val = float(m.group("num").lower().replace("infinity", "inf"))
            if op is not None:
                if rhs is not None:
                    raise LPParseError("two right-hand sides", lineno)
                rhs = sign * val
                sign = 1.0
                continue
            coef = (coef or 1.0) * val
            # a number followed by an operator/sign/end is a constant
            nxt = _TOK.match(text, pos)
            if nxt is None or not nxt.group("name"):
                const += sign * coef
                sign, coef = 1.0, None
                seen_term = True
            continue
        if m.group("op"):
            if op is not None:
                raise LPParseError("two comparison operators", lineno)
            o = m.group("op")
            op = {"<": LE, "<=": LE, "=<": LE, ">": GE, ">=": GE, "=>": GE, "=": EQ}[o]
            sign, coef = 1.0, None
            continue
        name = m.group("name")
        if op is not None:
            raise LPParseError(f"variable {name!r} on right-hand side", lineno)
        c = sign * (coef if coef is not None else 1.0)
        coefs[name] = coefs.get(name, 0.0) + c
        sign, coef = 1.0, None
        seen_term = True
    if op is not None and rhs is None:
        raise LPParseError("missing right-hand side", lineno)
    if not seen_term and op is None:
        raise LPParseError("empty expression", lineno)
    return coefs, const, op, rhs


def _statements(lines: list[tuple[int, str]]):
    """Group continuation lines into statements; one ends at a new label or once
    it carries an operator and a right-hand side."""
    buf: list[str] = []
    start = 0
    for n, line in lines:
        if buf and (_NAME.match(line) or _COMPLETE.search(" ".join(buf))):
            yield start, " ".join(buf)
            buf = []
        if not buf:
            start = n
        buf.append(line)
    if buf:
        yield start, " ".join(buf)


def read_lp(text: str) -> LinearModel:
    raw = text.splitlines()
    content = []
    for i, line in enumerate(raw, 1):
        line = line.split("\\", 1)[0].rstrip()
        if line.strip():
            content.append((i, line))
    if not content:
        raise LPParseError("empty input", 1)
    sense = None
    section = None
    chunks: dict[str, list[tuple[int, str]]] = {k: [] for k in ("obj", "st", "bounds", "gen", "bin")}
    ended = False
    for n, line in content:
        if ended:
            raise LPParseError("content after End", n)
        key = _section_of(line)
        if key in ("max", "min"):
            if sense is not None:
                raise LPParseError("objective declared twice", n)
            sense = MAXIMIZE if key == "max" else MINIMIZE
            section = "obj"
            continue
        if key == "end":
            ended = True
            continue
        if key is not None:
            if sense is None:
                raise LPParseError(f"section {line.strip()!r} before objective", n)
            section = key
            continue
        if section is None:
            raise LPParseError(f"expected Maximize or Minimize, got {line.strip()!r}", n)
        chunks[section].append((n, line))
    if sense is None:
        raise LPParseError("missing objective section", content[-1][0])
    if not ended:
        raise LPParseError("missing End", content[-1][0])

    order: list[str] = []
    seen: set[str] = set()

    def note(name: str) -> None:
        if name not in seen:
            seen.add(name)
            order.append(name)

    obj_coefs: dict[str, float] = {}
    obj_const = 0.0
    if chunks["obj"]:
        n0 = chunks["obj"][0][0]
        body = " ".join(l for _, l in chunks["obj"])
        m = _NAME.match(body)
        if m:
            body = body[m.end():]
        if body.strip():
            obj_coefs, obj_const, op, _ = _parse_linear(body, n0)
            if op is not None:
                raise LPParseError("comparison in objective", n0)
    for v in obj_coefs:
        note(v)

    rows = []
    names: set[str] = set()
    for k, (n, stmt) in enumerate(_statements(chunks["st"])):
        m = _NAME.match(stmt)
        cname = m.group(1) if m else f"c{k + 1}"
        body = stmt[m.end():] if m else stmt
        coefs, const, op, rhs = _parse_linear(body, n)
        if op is None:
            raise LPParseError(f"constraint {cname!r} has no comparison", n)
        if not coefs:
            raise LPParseError(f"constraint {cname!r} has no variables", n)
        if cname in names:
            raise LPParseError(f"duplicate constraint name {cname!r}", n)
        names.add(cname)
        for v in coefs:
            note(v)
        rows.append(Constraint(cname, LinearExpr(tuple((c, v) for v, c in coefs.items())), op, rhs - const))

    bounds: dict[str, list[float]] = {}
    for n, line in chunks["bounds"]:
        s = line.strip()
        mfree = re.fullmatch(r"([A-Za-z_][^\s]*)\s+free", s, re.I)
        if mfree:
            note(mfree.group(1))
            bounds[mfree.group(1)] = [-math.inf, math.inf]
            continue
        parts = re.split(r"\s*(<=|>=|=<|=>|<|>|=)\s*", s)
        def val(t: str) -> float:
            t = t.strip().lower()
            try:
                return float(t.replace("infinity", "inf"))
            except ValueError:
                raise LPParseError(f"bad bound value {t!r}", n) from None
        def is_name(t: str) -> bool:
            return bool(re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.\[\]#{}~!@$%^&]*", t.strip())) and t.strip().lower() not in ("inf", "infinity")
        if len(parts) == 5 and is_name(parts[2]):
            lo_op, hi_op = parts[1], parts[3]
            if lo_op not in ("<=", "<", "=<") or hi_op not in ("<=", "<", "=<"):
                raise LPParseError(f"malformed bound {s!r}", n)
            name = parts[2].strip()
            note(name)
            bounds[name] = [val(parts[0]), val(parts[4])]
        elif len(parts) == 3:
            if is_name(parts[0]):
                name, op, v = parts[0].strip(), parts[1], val(parts[2])
            elif is_name(parts[2]):
                name, v = parts[2].strip(), val(parts[0])
                op = {"<=": ">=", "<": ">=", "=<": ">=", ">=": "<=", ">": "<=", "=>": "<=", "=": "="}[parts[1]]
            else:
                raise LPParseError(f"malformed bound {s!r}", n)
            note(name)
            b = bounds.setdefault(name, [0.0, math.inf])
            if op in (">=", ">", "=>"):
                b[0] = v
            elif op in ("<=", "<", "=<"):
                b[1] = v
            else:
                b[0] = b[1] = v
        else:
            raise LPParseError(f"malformed bound {s!r}", n)

    kinds: dict[str, str] = {}
    for key, kind in (("gen", INTEGER), ("bin", BINARY)):
        for n, line in chunks[key]:
            for name in line.split():
                if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.\[\]#{}~!@$%^&]*", name):
                    raise LPParseError(f"bad variable name {name!r}", n)
                note(name)
                kinds[name] = kind

    variables = []
    for name in order:
        kind = kinds.get(name, CONTINUOUS)
        lo, hi = bounds.get(name, [0.0, 1.0 if kind == BINARY else math.inf])
        variables.append(Variable(name, lo, hi, kind))
    model = LinearModel(
        sense,
        LinearExpr(tuple((c, v) for v, c in obj_coefs.items()), obj_const),
        tuple(variables),
        tuple(rows),
    )
    try:
        ensure_valid(model)
    except ModelError as exc:
        raise LPParseError(str(exc), content[-1][0]) from exc
    return model
