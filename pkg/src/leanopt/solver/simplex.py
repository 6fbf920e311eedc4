"""Dense bounded-variable primal simplex (two phases, Bland's rule)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..model.ir import EQ, GE, LE, MAXIMIZE, LinearModel, ensure_valid

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
GAP_LIMIT = "gap_limit"

FEAS_TOL = 1e-6
PIVOT_TOL = 1e-12
_ELIG_TOL = 1e-9  # smallest tableau entry accepted as a pivot
_COST_TOL = 1e-9
DUAL_TOL = 1e-6
REINVERT_EVERY = 100


class NumericalInstabilityError(ArithmeticError):
    pass


@dataclass
class Solution:
    status: str
    objective: float = math.nan
    values: dict[str, float] = field(default_factory=dict)
    gap: float = 0.0
    nodes: int = 0
    bound: float = math.nan

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class LPData:
    """Array form of a model: min c.x + c0 s.t. rows (A x ? b), lo <= x <= hi."""

    names: list[str]
    A: np.ndarray
    b: np.ndarray
    senses: list[str]
    c: np.ndarray  # minimization form
    c0: float
    lo: np.ndarray
    hi: np.ndarray
    integral: np.ndarray
    maximize: bool

    @classmethod
    def from_model(cls, model: LinearModel) -> "LPData":
        ensure_valid(model)
        names = model.var_names()
        idx = {n: i for i, n in enumerate(names)}
        n, m = len(names), len(model.constraints)
        A = np.zeros((m, n))
        b = np.zeros(m)
        senses = []
        for r, con in enumerate(model.constraints):
            for coef, v in con.expr.terms:
                A[r, idx[v]] += coef
            b[r] = con.rhs - con.expr.constant
            senses.append(con.sense)
        sign = -1.0 if model.sense == MAXIMIZE else 1.0
        c = np.zeros(n)
        for coef, v in model.objective.terms:
            c[idx[v]] += sign * coef
        return cls(
            names, A, b, senses, c, sign * model.objective.constant,
            np.array([v.lower for v in model.variables], dtype=float),
            np.array([v.upper for v in model.variables], dtype=float),
            np.array([v.is_integral for v in model.variables], dtype=bool),
            model.sense == MAXIMIZE,
        )


@dataclass
class _Result:
    status: str
    x: Optional[np.ndarray] = None
    obj: float = math.nan  # minimization form, without c0


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    prow = T[r] / T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, prow)
    T[r] = prow


def _simplex(A: np.ndarray, b: np.ndarray, c: np.ndarray, u: np.ndarray, basis: list[int],
             n_art: int, phase1_cost: np.ndarray):
    """min c.x, A x = b (b >= 0), 0 <= x <= u; the last n_art columns are artificials.

    ``basis`` must index an identity submatrix of A. Returns (status, x, basis, at_upper).
    """
    m, n = A.shape
    T = A.astype(float).copy()
    beta = b.astype(float).copy()  # values of basic variables
    basis = list(basis)
    at_upper = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)  # artificials are frozen after phase 1
    rows = np.ones(m, dtype=bool)  # original rows still in the tableau

    def reinvert() -> None:
        """Rebuild the tableau and basic values from the original data (clears pivot drift)."""
        nonlocal T
        A_cur, b_cur = A[rows], b[rows]
        xn = np.where(at_upper, u, 0.0)
        xn[basis] = 0.0
        xn[~np.isfinite(xn)] = 0.0
        try:
            T = np.linalg.solve(A_cur[:, basis], A_cur)
            beta[:] = np.linalg.solve(A_cur[:, basis], b_cur - A_cur @ xn)
        except np.linalg.LinAlgError as exc:
            raise NumericalInstabilityError("basis became singular") from exc

    def iterate(cost: np.ndarray) -> str:
        max_iter = 50 * (m + n) + 1000
        d = cost - cost[basis] @ T
        d[basis] = 0.0
        since = 0  # pivots since the last reinversion
        for it in range(max_iter):
            if since >= REINVERT_EVERY:
                reinvert()
                since = 0
                d = cost - cost[basis] @ T
                d[basis] = 0.0
            improving = active & (((d < -_COST_TOL) & ~at_upper) | ((d > _COST_TOL) & at_upper))
            cand = np.flatnonzero(improving)
            if cand.size == 0:
                if since == 0:
                    return OPTIMAL
                # confirm optimality on a fresh factorization
                reinvert()
                since = 0
                d = cost - cost[basis] @ T
                d[basis] = 0.0
                continue
            j = int(cand[0])  # Bland: lowest index
            col = T[:, j]
            direction = -1.0 if at_upper[j] else 1.0
            # x_B changes by -direction * t * col
            delta = direction * col
            flip_t = u[j] if math.isfinite(u[j]) else math.inf
            mag = np.abs(delta)
            ub_basic = u[basis]
            pos = delta > _ELIG_TOL
            neg = (delta < -_ELIG_TOL) & np.isfinite(ub_basic)
            with np.errstate(divide="ignore", invalid="ignore"):
                t_all = np.where(pos, beta / delta, np.where(neg, (ub_basic - beta) / -delta, math.inf))
            t_all = np.maximum(t_all, 0.0)
            leave = -1
            leave_to_upper = False
            best_t = flip_t
            row_best = float(t_all.min()) if m else math.inf
            if row_best < flip_t - 1e-12:
                ties = np.flatnonzero(t_all <= row_best + 1e-12)
                basis_arr = np.asarray(basis)
                leave = int(ties[np.argmin(basis_arr[ties])])  # Bland: lowest leaving index
                best_t = float(t_all[leave])
                leave_to_upper = bool(neg[leave])
            if leave < 0 and not math.isfinite(best_t):
                if np.any((mag > PIVOT_TOL) & (mag <= _ELIG_TOL)):
                    raise NumericalInstabilityError(
                        f"column {j} has only pivot candidates below {_ELIG_TOL:g}")
                return UNBOUNDED
            # update basic values
            beta[:] -= best_t * delta
            if leave < 0:
                at_upper[j] = not at_upper[j]  # bound flip, no pivot
                continue
            piv = T[leave, j]
            if abs(piv) < PIVOT_TOL:
                raise NumericalInstabilityError(f"pivot magnitude {abs(piv):.3g} below {PIVOT_TOL:g}")
            old = basis[leave]
            entering_value = (u[j] if at_upper[j] else 0.0) + direction * best_t
            _pivot(T, leave, j)
            since += 1
            d -= d[j] * T[leave]
            d[j] = 0.0
            beta[leave] = entering_value
            basis[leave] = j
            at_upper[j] = False
            at_upper[old] = leave_to_upper
        raise NumericalInstabilityError("iteration limit reached (cycling suspected)")

    status = OPTIMAL
    if n_art:
        status = iterate(phase1_cost)
        if status != OPTIMAL:
            raise NumericalInstabilityError("phase 1 reported unbounded")
        infeas = float(phase1_cost[basis] @ beta)
        if infeas > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            return INFEASIBLE, None, basis, at_upper, T, beta
        # drive zero-valued artificials out of the basis
        first_art = n - n_art
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] < first_art:
                continue
            row = T[r, :first_art]
            cands = np.flatnonzero(np.abs(row) > _ELIG_TOL)
            if cands.size == 0:
                keep[r] = False  # redundant row
                continue
            j = int(cands[0])
            _pivot(T, r, j)
            value_j = u[j] if at_upper[j] else 0.0
            beta[r] = value_j
            basis[r] = j
            at_upper[j] = False
        if not keep.all():
            T = T[keep]
            beta = beta[keep]
            basis = [bv for bv, k in zip(basis, keep) if k]
            m = T.shape[0]
            rows[:] = keep
        active[first_art:] = False
        at_upper[first_art:] = False
    else:
        keep = np.ones(m, dtype=bool)
    status = iterate(c)
    return status, keep, basis, at_upper, T, beta


def solve_arrays(data: LPData, lo: np.ndarray, hi: np.ndarray, check_duals: bool = True) -> _Result:
    """Solve the LP relaxation of ``data`` under bounds ``lo``/``hi``."""
    n = len(data.names)
    if np.any(lo > hi + 1e-12):
        return _Result(INFEASIBLE)
    # column map: original j -> standard columns with sign, plus offset
    cols: list[tuple[int, float]] = []  # (original var, sign)
    offset = np.zeros(n)
    ub: list[float] = []
    for j in range(n):
        l, h = lo[j], hi[j]
        if math.isfinite(l):
            offset[j] = l
            cols.append((j, 1.0))
            ub.append(h - l)
        elif math.isfinite(h):
            offset[j] = h
            cols.append((j, -1.0))
            ub.append(math.inf)
        else:
            cols.append((j, 1.0))
            ub.append(math.inf)
            cols.append((j, -1.0))
            ub.append(math.inf)
    ns = len(cols)
    m = data.A.shape[0]
    S = np.zeros((m, ns))
    cs = np.zeros(ns)
    for k, (j, sg) in enumerate(cols):
        S[:, k] = sg * data.A[:, j]
        cs[k] = sg * data.c[j]
    rhs = data.b - data.A @ offset
    slack_cols = [r for r in range(m) if data.senses[r] != EQ]
    n_slack = len(slack_cols)
    Af = np.zeros((m, ns + n_slack))
    Af[:, :ns] = S
    slack_of = {}
    for k, r in enumerate(slack_cols):
        Af[r, ns + k] = 1.0 if data.senses[r] == LE else -1.0
        slack_of[r] = ns + k
    uf = ub + [math.inf] * n_slack
    for r in range(m):
        if rhs[r] < 0:
            Af[r] *= -1
            rhs[r] *= -1
    basis = []
    art_rows = []
    for r in range(m):
        k = slack_of.get(r)
        if k is not None and Af[r, k] == 1.0:
            basis.append(k)
        else:
            basis.append(-1)
            art_rows.append(r)
    n_main = Af.shape[1]
    n_art = len(art_rows)
    A_all = np.zeros((m, n_main + n_art))
    A_all[:, :n_main] = Af
    for k, r in enumerate(art_rows):
        A_all[r, n_main + k] = 1.0
        basis[r] = n_main + k
    u_all = np.array(uf + [math.inf] * n_art)
    c_all = np.concatenate([cs, np.zeros(n_slack + n_art)])
    p1 = np.zeros(n_main + n_art)
    p1[n_main:] = 1.0
    status, keep, basis, at_upper, T, beta = _simplex(A_all, rhs, c_all, u_all, basis, n_art, p1)
    if status != OPTIMAL:
        return _Result(status)
    x_std = np.where(at_upper, u_all, 0.0)
    x_std[np.isinf(x_std)] = 0.0
    x_std[basis] = _refactor(A_all[keep], rhs[keep], basis, x_std, beta)
    if check_duals:
        # rows found redundant in phase 1 carry no dual
        _check_duals(A_all[keep], rhs[keep], c_all, u_all, basis, at_upper, x_std, n_main)
    x = offset.copy()
    for k, (j, sg) in enumerate(cols):
        x[j] += sg * x_std[k]
    obj = float(data.c @ x)
    return _Result(OPTIMAL, x, obj)


def _refactor(A, b, basis, x, beta):
    """Basic values from a fresh solve with the final basis; the tableau values drift on badly scaled rows."""
    nonbasic = x.copy()
    nonbasic[basis] = 0.0
    try:
        fresh = np.linalg.solve(A[:, basis], b - A @ nonbasic)
    except np.linalg.LinAlgError:
        return beta
    # keep the tableau values when the fresh solve is worse conditioned than the drift it fixes
    if not np.all(np.isfinite(fresh)) or np.abs(fresh - beta).max(initial=0.0) > 1e-3 * max(1.0, np.abs(beta).max(initial=0.0)):
        return beta
    return np.maximum(fresh, 0.0) if np.all(fresh > -FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0))) else beta


def _check_duals(A, b, c, u, basis, at_upper, x, n_main):
    """Rebuild y from B^T y = c_B and confirm dual feasibility and zero duality gap."""
    B = A[:, basis]
    try:
        y = np.linalg.solve(B.T, c[basis])
    except np.linalg.LinAlgError as exc:
        raise NumericalInstabilityError("singular final basis") from exc
    d = c - y @ A
    nonbasic = np.ones(A.shape[1], dtype=bool)
    nonbasic[basis] = False
    nonbasic[n_main:] = False  # frozen artificials
    scale = max(1.0, float(np.abs(c).max(initial=0.0)))
    bad_low = nonbasic & ~at_upper & (d < -DUAL_TOL * scale)
    bad_up = nonbasic & at_upper & (d > DUAL_TOL * scale)
    if bad_low.any() or bad_up.any():
        raise NumericalInstabilityError("reduced costs have the wrong sign at the reported optimum")
    upper_part = float(d[nonbasic & at_upper] @ u[nonbasic & at_upper]) if (nonbasic & at_upper).any() else 0.0
    dual_obj = float(y @ b) + upper_part
    primal = float(c @ x)
    if abs(dual_obj - primal) > DUAL_TOL * max(1.0, abs(primal)):
        raise NumericalInstabilityError(f"duality gap {abs(dual_obj - primal):.3g} at the reported optimum")


def _to_solution(data: LPData, res: _Result, gap: float = 0.0, nodes: int = 0) -> Solution:
    if res.status != OPTIMAL:
        return Solution(res.status, nodes=nodes)
    obj_min = res.obj + data.c0
    obj = -obj_min if data.maximize else obj_min
    values = {n: float(v) for n, v in zip(data.names, res.x)}
    return Solution(OPTIMAL, obj, values, gap, nodes, obj)


def solve_lp(model: LinearModel) -> Solution:
    """Solve ``model`` as a linear program (integrality is ignored)."""
    data = LPData.from_model(model)
    res = solve_arrays(data, data.lo, data.hi)
    return _to_solution(data, res)
