import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_int_model
from leanopt.model import EQ, GE, INTEGER, LE, Constraint, LinearExpr, LinearModel, Variable
from leanopt.solver import (
    INFEASIBLE, OPTIMAL, UNBOUNDED, EnumerationLimitError, NodeLimitError, brute_force, solve, solve_lp,
    solve_milp,
)
from oracles import highs_optimum


def lp(sense, obj, rows, variables=None):
    names = sorted({v for _, v in obj} | {v for r in rows for _, v in r[0]})
    variables = variables or [Variable(n) for n in names]
    cons = [Constraint(f"c{k}", LinearExpr(tuple(t)), s, b) for k, (t, s, b) in enumerate(rows)]
    return LinearModel(sense, LinearExpr(tuple(obj)), variables, cons)


class TestSimplex:
    def test_trivial_lp(self):
        m = lp("maximize", [(1, "x"), (1, "y")], [([(1, "x"), (1, "y")], LE, 5)])
        sol = solve_lp(m)
        assert sol.status == OPTIMAL and sol.objective == pytest.approx(5)

    def test_textbook_lp(self):
        # max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        m = lp("maximize", [(3, "x"), (5, "y")],
               [([(1, "x")], LE, 4), ([(2, "y")], LE, 12), ([(3, "x"), (2, "y")], LE, 18)])
        sol = solve_lp(m)
        assert sol.objective == pytest.approx(36)
        assert sol.values == pytest.approx({"x": 2, "y": 6})

    def test_infeasible(self):
        m = lp("maximize", [(1, "x")], [([(1, "x")], GE, 5), ([(1, "x")], LE, 3)])
        assert solve_lp(m).status == INFEASIBLE

    def test_unbounded(self):
        m = lp("maximize", [(1, "x")], [([(1, "x"), (-1, "y")], LE, 1)])
        assert solve_lp(m).status == UNBOUNDED

    def test_equality_and_negative_lower_bound(self):
        m = lp("minimize", [(1, "x"), (2, "y")], [([(1, "x"), (1, "y")], EQ, 3)],
               [Variable("x", -2, 1), Variable("y", 0, math.inf)])
        sol = solve_lp(m)
        assert sol.objective == pytest.approx(1 + 2 * 2)

    def test_redundant_equalities(self):
        m = lp("minimize", [(1, "x"), (1, "y")],
               [([(1, "x"), (1, "y")], EQ, 2), ([(2, "x"), (2, "y")], EQ, 4), ([(1, "x")], GE, 0.5)])
        assert solve_lp(m).objective == pytest.approx(2)

    def test_degenerate_cycling_example(self):
        # Beale's example cycles under the textbook rule; the anti-cycling rule must terminate
        m = lp("minimize", [(-0.75, "x4"), (150, "x5"), (-0.02, "x6"), (6, "x7")],
               [([(0.25, "x4"), (-60, "x5"), (-0.04, "x6"), (9, "x7")], LE, 0),
                ([(0.5, "x4"), (-90, "x5"), (-0.02, "x6"), (3, "x7")], LE, 0),
                ([(1, "x6")], LE, 1)])
        assert solve_lp(m).objective == pytest.approx(-0.05)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 100_000))
    def test_lp_matches_highs(self, seed):
        m = random_int_model(np.random.default_rng(seed)).relaxed()
        ref = highs_optimum(m)
        sol = solve_lp(m)
        if ref is None:
            assert sol.status == INFEASIBLE
        else:
            assert sol.status == OPTIMAL
            assert sol.objective == pytest.approx(ref, rel=1e-7, abs=1e-7)
            assert m.max_violation(sol.values) <= 1e-7


class TestMilp:
    def test_knapsack(self):
        w, v = [5, 4, 6, 3], [10, 40, 30, 50]
        names = [f"b{k}" for k in range(4)]
        m = LinearModel("maximize", LinearExpr(tuple(zip(map(float, v), names))),
                        [Variable(n, 0, 1, INTEGER) for n in names],
                        [Constraint("cap", LinearExpr(tuple(zip(map(float, w), names))), LE, 10)])
        sol = solve_milp(m)
        assert sol.objective == pytest.approx(90)
        assert sol.gap <= 1e-4

    def test_solve_dispatches_on_integrality(self):
        m = lp("maximize", [(1, "x")], [([(2, "x")], LE, 3)], [Variable("x", 0, math.inf, INTEGER)])
        assert solve(m).objective == pytest.approx(1)
        assert solve(m.relaxed()).objective == pytest.approx(1.5)

    def test_node_limit_raises_with_incumbent_slot(self):
        rng = np.random.default_rng(5)
        m = random_int_model(rng, 8, 4)
        try:
            sol = solve_milp(m, node_limit=1)
        except NodeLimitError as exc:
            assert exc.nodes >= 1
        else:
            assert sol.status in (OPTIMAL, INFEASIBLE)

    def test_brute_force_refuses_huge_box(self):
        m = lp("maximize", [(1, "x")], [([(1, "x")], LE, 5)], [Variable("x", 0, 10 ** 7, INTEGER)])
        with pytest.raises(EnumerationLimitError):
            brute_force(m)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 100_000))
    def test_milp_matches_brute_force(self, seed):
        m = random_int_model(np.random.default_rng(seed), max_points=50_000)
        exact = brute_force(m)
        sol = solve_milp(m)
        assert sol.status == exact.status
        if exact.status == OPTIMAL:
            assert sol.objective == pytest.approx(exact.objective, rel=1e-4, abs=1e-6)
            assert m.max_violation(sol.values) <= 1e-6
