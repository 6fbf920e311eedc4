"""Best-first branch-and-bound over the simplex relaxation."""
from __future__ import annotations

import heapq
import math
from typing import Optional

import numpy as np

from ..model.ir import LinearModel
from .simplex import GAP_LIMIT, INFEASIBLE, OPTIMAL, UNBOUNDED, LPData, Solution, solve_arrays

GAP_TOL = 1e-4
INT_TOL = 1e-6
DEFAULT_NODE_LIMIT = 1_000_000


class NodeLimitError(RuntimeError):
    """Raised when branch-and-bound exhausts its node budget; carries the incumbent."""

    def __init__(self, nodes: int, incumbent: Optional[Solution]):
        self.nodes = nodes
        self.incumbent = incumbent
        super().__init__(f"node limit {nodes} reached"
                         + ("" if incumbent is None else f" (incumbent {incumbent.objective:g}, gap {incumbent.gap:.3g})"))


def relative_gap(incumbent: float, bound: float) -> float:
    return max(0.0, (incumbent - bound) / max(1.0, abs(incumbent)))


def solve_milp(model: LinearModel, node_limit: int = DEFAULT_NODE_LIMIT, gap_tol: float = GAP_TOL,
               raise_on_limit: bool = True) -> Solution:
    """Solve ``model`` to relative gap ``gap_tol``.

    Branches on the most fractional integer variable (ties to the lowest
    index) and always expands the open node with the best bound.
    """
    data = LPData.from_model(model)
    lo = data.lo.copy()
    hi = data.hi.copy()
    ints = np.flatnonzero(data.integral)
    lo[ints] = np.ceil(lo[ints] - INT_TOL)
    hi[ints] = np.floor(hi[ints] + INT_TOL)

    def finish(status: str, x, obj_min: float, gap: float, nodes: int, bound: float) -> Solution:
        sign = -1.0 if data.maximize else 1.0
        if x is None:
            return Solution(status, nodes=nodes)
        vals = {}
        for k, name in enumerate(data.names):
            v = float(x[k])
            if data.integral[k]:
                v = float(round(v))
            vals[name] = v + 0.0
        obj = sign * (float(data.c @ np.array([vals[n] for n in data.names])) + data.c0)
        return Solution(status, obj, vals, gap, nodes, sign * (bound + data.c0))

    root = solve_arrays(data, lo, hi)
    nodes = 1
    if root.status == INFEASIBLE:
        return Solution(INFEASIBLE, nodes=nodes)
    if root.status == UNBOUNDED:
        return Solution(UNBOUNDED, nodes=nodes)

    best_x = None
    best_obj = math.inf
    counter = 0
    heap: list = [(root.obj, counter, lo, hi, root)]
    while heap:
        bound = heap[0][0]
        if best_x is not None and relative_gap(best_obj, bound) <= gap_tol:
            break
        if nodes >= node_limit:
            inc = None
            if best_x is not None:
                inc = finish(GAP_LIMIT, best_x, best_obj, relative_gap(best_obj, bound), nodes, bound)
            if raise_on_limit:
                raise NodeLimitError(nodes, inc)
            return inc if inc is not None else Solution(GAP_LIMIT, nodes=nodes)
        node_bound, _, nlo, nhi, res = heapq.heappop(heap)
        if best_x is not None and node_bound >= best_obj - 1e-9 * max(1.0, abs(best_obj)):
            continue
        x = res.x
        frac = np.abs(x[ints] - np.round(x[ints])) if ints.size else np.zeros(0)
        if ints.size == 0 or frac.max() <= INT_TOL:
            if res.obj < best_obj:
                best_obj, best_x = res.obj, x
            continue
        # most fractional: distance to nearest integer is largest; first index wins ties
        score = np.minimum(x[ints] - np.floor(x[ints]), np.ceil(x[ints]) - x[ints])
        k = int(ints[int(np.argmax(score))])
        v = x[k]
        for child_lo, child_hi in ((nlo, _with(nhi, k, math.floor(v))), (_with(nlo, k, math.ceil(v)), nhi)):
            r = solve_arrays(data, child_lo, child_hi)
            nodes += 1
            if r.status != OPTIMAL:
                continue
            if best_x is not None and r.obj >= best_obj - 1e-9 * max(1.0, abs(best_obj)):
                continue
            counter += 1
            heapq.heappush(heap, (r.obj, counter, child_lo, child_hi, r))
    if best_x is None:
        return Solution(INFEASIBLE, nodes=nodes)
    final_bound = heap[0][0] if heap else best_obj
    final_bound = min(final_bound, best_obj)
    return finish(OPTIMAL, best_x, best_obj, relative_gap(best_obj, final_bound), nodes, final_bound)


def _with(arr: np.ndarray, k: int, value: float) -> np.ndarray:
    out = arr.copy()
    out[k] = value
    return out
