"""Canonical fingerprints and equivalence of models up to variable renaming.

Two models are equivalent when some bijection of variable names maps one onto
the other, with constraint order ignored, ``>=`` rows read as negated ``<=``
rows, equality rows allowed to flip sign, and objectives compared in
minimization form.

Variables and rows are coloured by iterated hashing over the variable/row
incidence graph (colour refinement). When refinement separates every
variable the mapping is read off directly; otherwise an individualize-and-
refine search runs, limited to ``cap`` ambiguous variables.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Mapping, Optional

from .ir import EQ, GE, LE, MAXIMIZE, LinearModel, ensure_valid

REL_TOL = 1e-9
ABS_TOL = 1e-12
DEFAULT_CAP = 30
DEFAULT_NODE_LIMIT = 20000


class AmbiguityError(RuntimeError):
    """Equivalence could not be decided within the configured search cap."""


def close(x: float, y: float) -> bool:
    if math.isinf(x) or math.isinf(y):
        return x == y
    return math.isclose(x, y, rel_tol=REL_TOL, abs_tol=ABS_TOL)


def _k(x: float) -> str:
    # hash key coarser than REL_TOL so near-equal values usually collide
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        return "0"
    return format(x, ".8g")


def _h(*parts) -> str:
    return hashlib.sha256(repr(parts).encode()).hexdigest()[:24]


@dataclass(frozen=True)
class _Row:
    coefs: dict  # var -> coef
    sense: str  # "<=" or "="
    rhs: float
    flippable: bool  # equality row identical to its own negation up to renaming


@dataclass
class _Norm:
    names: list[str]
    index: dict[str, int]
    kinds: list[str]
    lower: list[float]
    upper: list[float]
    obj: list[float]
    obj_const: float
    rows: list[_Row]
    incid: list[list[tuple[int, float]]]  # var -> [(row, coef)]


def _orient_eq(coefs: dict, rhs: float) -> tuple[dict, float, bool]:
    pos = (sorted(_k(c) for c in coefs.values()), _k(rhs))
    neg = (sorted(_k(-c) for c in coefs.values()), _k(-rhs))
    if pos == neg:
        return coefs, rhs, True
    # orientation from a rename-invariant key (sorted coefficient multiset, then rhs)
    key_p = (sorted(coefs.values()), rhs)
    key_n = (sorted(-c for c in coefs.values()), -rhs)
    if key_n < key_p:
        return {v: -c for v, c in coefs.items()}, -rhs, False
    return coefs, rhs, False


def _normalize(model: LinearModel) -> _Norm:
    ensure_valid(model)
    names = [v.name for v in model.variables]
    index = {n: i for i, n in enumerate(names)}
    sign = -1.0 if model.sense == MAXIMIZE else 1.0
    obj = [0.0] * len(names)
    for c, v in model.objective.terms:
        obj[index[v]] += sign * c
    rows: list[_Row] = []
    for con in model.constraints:
        coefs = {v: c for v, c in con.expr.as_dict().items() if c != 0.0}
        rhs = con.rhs - con.expr.constant
        if con.sense == GE:
            coefs = {v: -c for v, c in coefs.items()}
            rhs = -rhs
            sense = LE
        elif con.sense == EQ:
            coefs, rhs, flip = _orient_eq(coefs, rhs)
            rows.append(_Row(coefs, EQ, rhs, flip))
            continue
        else:
            sense = LE
        rows.append(_Row(coefs, sense, rhs, False))
    incid: list[list[tuple[int, float]]] = [[] for _ in names]
    for r, row in enumerate(rows):
        for v, c in row.coefs.items():
            incid[index[v]].append((r, c))
    return _Norm(
        names,
        index,
        [v.kind for v in model.variables],
        [v.lower for v in model.variables],
        [v.upper for v in model.variables],
        obj,
        sign * model.objective.constant,
        rows,
        incid,
    )


def _coef_key(row: _Row, c: float) -> str:
    return _k(abs(c)) + "~" if row.flippable else _k(c)


def _initial_colors(n: _Norm) -> tuple[list[str], list[str]]:
    vc = [_h("v", n.kinds[i], _k(n.lower[i]), _k(n.upper[i]), _k(n.obj[i])) for i in range(len(n.names))]
    rc = [
        _h("r", r.sense, _k(abs(r.rhs)) if r.flippable else _k(r.rhs), r.flippable,
           tuple(sorted(_coef_key(r, c) for c in r.coefs.values())))
        for r in n.rows
    ]
    return vc, rc


def _round(n: _Norm, vc: list[str], rc: list[str]) -> tuple[list[str], list[str]]:
    new_rc = []
    for r, row in enumerate(n.rows):
        nb = sorted((_coef_key(row, c), vc[n.index[v]]) for v, c in row.coefs.items())
        new_rc.append(_h(rc[r], tuple(nb)))
    new_vc = []
    for i in range(len(n.names)):
        nb = sorted((_coef_key(n.rows[r], c), new_rc[r]) for r, c in n.incid[i])
        new_vc.append(_h(vc[i], tuple(nb)))
    return new_vc, new_rc


def _ncls(colors: list[str]) -> int:
    return len(set(colors))


def _refine_joint(pairs):
    """Refine several (norm, vc, rc) states in lockstep so colours stay comparable."""
    states = [list(p) for p in pairs]
    while True:
        before = [(_ncls(s[1]), _ncls(s[2])) for s in states]
        nxt = [_round(s[0], s[1], s[2]) for s in states]
        after = [(_ncls(v), _ncls(r)) for v, r in nxt]
        for s, (v, r) in zip(states, nxt):
            s[1], s[2] = v, r
        if after == before:
            return [(s[1], s[2]) for s in states]


@dataclass(frozen=True)
class CanonicalForm:
    sense: str
    objective_constant: str
    variable_signatures: tuple[str, ...]
    constraint_signatures: tuple[str, ...]
    fingerprint: str
    discrete: bool  # refinement separated every variable


def canonicalize(model: LinearModel) -> CanonicalForm:
    n = _normalize(model)
    vc, rc = _initial_colors(n)
    [(vc, rc)] = _refine_joint([(n, vc, rc)])
    vs, cs = tuple(sorted(vc)), tuple(sorted(rc))
    const = _k(n.obj_const)
    fp = hashlib.sha256(repr(("min", const, vs, cs)).encode()).hexdigest()
    return CanonicalForm("minimize", const, vs, cs, fp, _ncls(vc) == len(vc))


def _row_key(row: _Row, mapping: Optional[Mapping[str, str]] = None) -> tuple:
    items = sorted(((mapping[v] if mapping else v), _k(c)) for v, c in row.coefs.items())
    return (row.sense, _k(row.rhs), tuple(items))


def _negated(row: _Row) -> _Row:
    return _Row({v: -c for v, c in row.coefs.items()}, row.sense, -row.rhs, row.flippable)


def _rows_close(a: _Row, b: _Row, mapping: Mapping[str, str]) -> bool:
    if a.sense != b.sense or len(a.coefs) != len(b.coefs) or not close(a.rhs, b.rhs):
        return False
    for v, c in a.coefs.items():
        w = mapping[v]
        if w not in b.coefs or not close(c, b.coefs[w]):
            return False
    return True


def _verify(a: _Norm, b: _Norm, mapping: dict[str, str]) -> bool:
    if not close(a.obj_const, b.obj_const):
        return False
    for i, name in enumerate(a.names):
        j = b.index[mapping[name]]
        if a.kinds[i] != b.kinds[j]:
            return False
        if not (close(a.lower[i], b.lower[j]) and close(a.upper[i], b.upper[j]) and close(a.obj[i], b.obj[j])):
            return False
    if len(a.rows) != len(b.rows):
        return False
    buckets: dict[tuple, list[int]] = {}
    for j, row in enumerate(b.rows):
        buckets.setdefault(_row_key(row), []).append(j)
    used = [False] * len(b.rows)
    leftovers = []
    for row in a.rows:
        hit = None
        variants = [row, _negated(row)] if row.sense == EQ else [row]
        for cand in variants:
            for j in buckets.get(_row_key(cand, mapping), []):
                if not used[j] and _rows_close(cand, b.rows[j], mapping):
                    hit = j
                    break
            if hit is not None:
                break
        if hit is None:
            leftovers.append(variants)
        else:
            used[hit] = True
    # rows whose rounded keys straddled a rounding boundary
    for variants in leftovers:
        hit = None
        for j, row in enumerate(b.rows):
            if not used[j] and any(_rows_close(c, row, mapping) for c in variants):
                hit = j
                break
        if hit is None:
            return False
        used[hit] = True
    return True


class _Search:
    def __init__(self, a: _Norm, b: _Norm, cap: int, node_limit: int):
        self.a, self.b = a, b
        self.cap, self.node_limit = cap, node_limit
        self.nodes = 0

    def run(self) -> Optional[dict[str, str]]:
        va, ra = _initial_colors(self.a)
        vb, rb = _initial_colors(self.b)
        [(va, ra), (vb, rb)] = _refine_joint([(self.a, va, ra), (self.b, vb, rb)])
        if sorted(va) != sorted(vb) or sorted(ra) != sorted(rb):
            return None
        ambiguous = self._ambiguous(va)
        if ambiguous > self.cap:
            raise AmbiguityError(
                f"{ambiguous} variables remain indistinguishable after refinement (cap {self.cap})"
            )
        return self._search(va, ra, vb, rb, 0)

    @staticmethod
    def _ambiguous(colors: list[str]) -> int:
        counts: dict[str, int] = {}
        for c in colors:
            counts[c] = counts.get(c, 0) + 1
        return sum(k for k in counts.values() if k > 1)

    def _search(self, va, ra, vb, rb, depth):
        self.nodes += 1
        if self.nodes > self.node_limit:
            raise AmbiguityError(f"equivalence search exceeded {self.node_limit} nodes")
        if sorted(va) != sorted(vb) or sorted(ra) != sorted(rb):
            return None
        classes: dict[str, list[int]] = {}
        for i, c in enumerate(va):
            classes.setdefault(c, []).append(i)
        if all(len(m) == 1 for m in classes.values()):
            pos_b = {c: j for j, c in enumerate(vb)}
            mapping = {self.a.names[i]: self.b.names[pos_b[c]] for i, c in enumerate(va)}
            return mapping if _verify(self.a, self.b, mapping) else None
        color = min((c for c, m in classes.items() if len(m) > 1), key=lambda c: (len(classes[c]), c))
        i = classes[color][0]
        tag = _h("ind", depth, color)
        for j in (j for j, c in enumerate(vb) if c == color):
            va2, vb2 = list(va), list(vb)
            va2[i] = vb2[j] = tag
            [(va2, ra2), (vb2, rb2)] = _refine_joint([(self.a, va2, ra), (self.b, vb2, rb)])
            found = self._search(va2, ra2, vb2, rb2, depth + 1)
            if found is not None:
                return found
        return None


def models_equivalent(
    a: LinearModel,
    b: LinearModel,
    cap: int = DEFAULT_CAP,
    node_limit: int = DEFAULT_NODE_LIMIT,
) -> tuple[bool, Optional[dict[str, str]]]:
    """Decide equivalence; when true also return the variable mapping a -> b.

    Raises AmbiguityError when more than ``cap`` variables stay
    indistinguishable after refinement, or the search exceeds ``node_limit``.
    """
    na, nb = _normalize(a), _normalize(b)
    if len(na.names) != len(nb.names) or len(na.rows) != len(nb.rows):
        return False, None
    mapping = _Search(na, nb, cap, node_limit).run()
    return (mapping is not None), mapping
