"""Exhaustive enumeration over an integer box; the reference oracle for small models."""
from __future__ import annotations

import math
from typing import Mapping, Optional

import numpy as np

from ..model.ir import EQ, GE, LE, LinearModel
from .simplex import FEAS_TOL, INFEASIBLE, OPTIMAL, LPData, Solution

ENUMERATION_LIMIT = 1_000_000
_CHUNK = 200_000


class EnumerationLimitError(ValueError):
    pass


def brute_force(model: LinearModel, box: Optional[Mapping[str, tuple[int, int]]] = None,
                limit: int = ENUMERATION_LIMIT) -> Solution:
    """Enumerate every integer point of ``box`` (defaults to finite variable bounds).

    Ties between equally good points go to the first point in lexicographic
    order of the variable list.
    """
    data = LPData.from_model(model)
    ranges = []
    for k, name in enumerate(data.names):
        if box is not None and name in box:
            lo, hi = box[name]
        else:
            lo, hi = data.lo[k], data.hi[k]
        lo = max(lo, data.lo[k])
        hi = min(hi, data.hi[k])
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise EnumerationLimitError(f"variable {name!r} has no finite range to enumerate")
        ranges.append(np.arange(math.ceil(lo - 1e-9), math.floor(hi + 1e-9) + 1, dtype=float))
    sizes = [len(r) for r in ranges]
    total = math.prod(sizes) if sizes else 1
    if total > limit:
        raise EnumerationLimitError(f"{total} points exceed the enumeration limit {limit}")
    if total == 0:
        return Solution(INFEASIBLE, nodes=0)
    A, b = data.A, data.b
    le = np.array([s == LE for s in data.senses], dtype=bool)
    ge = np.array([s == GE for s in data.senses], dtype=bool)
    eq = np.array([s == EQ for s in data.senses], dtype=bool)
    best_val, best_pt = math.inf, None
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(total, start + _CHUNK))
        idx = np.unravel_index(flat, sizes) if sizes else ()
        X = np.stack([ranges[k][idx[k]] for k in range(len(sizes))], axis=1) if sizes else np.zeros((len(flat), 0))
        if A.shape[0]:
            lhs = X @ A.T
            tol = FEAS_TOL * np.maximum(1.0, np.abs(b))
            ok = np.all(~le | (lhs <= b + tol), axis=1)
            ok &= np.all(~ge | (lhs >= b - tol), axis=1)
            ok &= np.all(~eq | (np.abs(lhs - b) <= tol), axis=1)
        else:
            ok = np.ones(len(flat), dtype=bool)
        if not ok.any():
            continue
        vals = X[ok] @ data.c
        k = int(np.argmin(vals))
        if vals[k] < best_val - 1e-12:
            best_val, best_pt = float(vals[k]), X[ok][k]
    if best_pt is None:
        return Solution(INFEASIBLE, nodes=total)
    obj_min = best_val + data.c0
    obj = -obj_min if data.maximize else obj_min
    values = {n: float(v) for n, v in zip(data.names, best_pt)}
    return Solution(OPTIMAL, obj, values, 0.0, total, obj)
