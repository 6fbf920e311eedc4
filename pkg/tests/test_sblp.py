import shutil

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SBLP_DIR, random_gam_instance
from leanopt.model import BINARY
from leanopt.sblp import (
    RATIO, BigMError, GamInstance, ProductOption, SblpDataError, Segment, build_network_planning, build_sblp,
    choose_big_m, gam_probabilities, load_instance, parse_flight_filter, parse_od, parse_window, x0_name, x_name,
)
from leanopt.solver import OPTIMAL, solve
from oracles import highs_optimum

CA_FILTER = ("(OD = ('A', 'C') AND Departure Time='23:00'), (OD = ('A', 'C') AND Departure Time='19:05'), "
             "(OD = ('B', 'A') AND Departure Time='15:40'), (OD = ('B', 'A') AND Departure Time='18:50'), "
             "(OD = ('C', 'A') AND Departure Time='16:55'), (OD = ('B', 'A') AND Departure Time='09:05'), "
             "(OD = ('C', 'A') AND Departure Time='07:40')")

option = st.builds(
    lambda v, r, p: (v, r * v, p),
    st.floats(0.01, 5.0), st.floats(0.0, 1.0), st.floats(0.0, 1000.0),
)


def segment_with(options):
    seg = Segment(("A", "B"), 100.0, 1.0)
    opts = [ProductOption(seg.id, f"{6 + k:02d}:00", "f", p, v, w) for k, (v, w, p) in enumerate(options)]
    return seg, opts


class TestGam:
    @settings(max_examples=300, deadline=None)
    @given(st.lists(option, min_size=1, max_size=8), st.data())
    def test_probabilities_sum_to_one(self, options, data):
        seg, opts = segment_with(options)
        mask = data.draw(st.lists(st.booleans(), min_size=len(opts), max_size=len(opts)))
        offered = [o for o, m in zip(opts, mask) if m]
        pis, pi0 = gam_probabilities(seg, offered, opts)
        assert abs(pi0 + sum(pis) - 1.0) <= 1e-12
        assert all(p >= 0 for p in pis) and pi0 > 0

    @settings(max_examples=200, deadline=None)
    @given(st.lists(option, min_size=2, max_size=8), st.data())
    def test_offering_more_lowers_the_others(self, options, data):
        seg, opts = segment_with(options)
        k = data.draw(st.integers(0, len(opts) - 1))
        rest = opts[:k] + opts[k + 1:]
        pis_small, pi0_small = gam_probabilities(seg, rest, opts)
        pis_big, pi0_big = gam_probabilities(seg, rest + [opts[k]], opts)
        assert pi0_big <= pi0_small + 1e-15
        assert all(b <= a + 1e-15 for a, b in zip(pis_small, pis_big))

    def test_empty_offer(self):
        seg, opts = segment_with([(1.0, 0.3, 10.0), (2.0, 0.0, 5.0)])
        pis, pi0 = gam_probabilities(seg, [], opts)
        assert pis == [] and pi0 == 1.0

    def test_shadow_validation(self):
        with pytest.raises(SblpDataError):
            ProductOption("A-B", "06:00", "f", 10, 1.0, 1.5)


class TestBuilders:
    def fixture(self, **kw):
        return load_instance(SBLP_DIR, **kw)

    def test_fixture_loads_with_table_demand(self):
        inst = self.fixture()
        assert {s.id: s.demand for s in inst.segments}["A-B"] == 38965.86
        assert len(inst.flights()) == 19 and len(inst.options) == 38

    def test_consumption_pair_sets_capacity_coefficients(self):
        inst = self.fixture(consumption={"Eco-flexi": 2, "Eco-lite": 1})
        m = build_sblp(inst, parse_flight_filter(CA_FILTER))
        cap = next(c for c in m.constraints if c.name == "cap_AC_2300")
        assert sorted(cap.expr.as_dict().values()) == [1.0, 2.0]
        assert m.n_vars == 17

    def test_sblp_matches_highs(self):
        inst = self.fixture(consumption={"Eco-flexi": 2, "Eco-lite": 1})
        m = build_sblp(inst, parse_flight_filter(CA_FILTER))
        sol = solve(m)
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(highs_optimum(m), rel=1e-9)

    def test_sblp_solution_obeys_scale_rows(self):
        inst = random_gam_instance(np.random.default_rng(1))
        sol = solve(build_sblp(inst))
        for o in inst.options:
            assert sol.values[x_name(o)] / o.v <= sol.values[x0_name(o.segment)] / 1.0 + 1e-6

    def test_planning_rows(self):
        inst = self.fixture()
        flights = parse_flight_filter(CA_FILTER)
        m = build_network_planning(inst, flights, max_flights=3)
        card = next(c for c in m.constraints if c.name == "cardinality")
        assert card.rhs == 3 and len(card.expr.terms) == len(flights)
        assert sum(v.kind == BINARY for v in m.variables) == len(flights)
        assert {c.name for c in m.constraints if c.name.startswith("flow_")} == {"flow_A", "flow_B", "flow_C"}

    def test_planning_respects_limit(self):
        inst = random_gam_instance(np.random.default_rng(4))
        m = build_network_planning(inst, None, max_flights=2)
        sol = solve(m)
        assert sum(round(v) for k, v in sol.values.items() if k.startswith("y_")) <= 2

    @pytest.mark.parametrize("seed", range(3))
    def test_relaxation_identity(self, seed):
        inst = random_gam_instance(np.random.default_rng(100 + seed))
        a = solve(build_sblp(inst))
        b = solve(build_network_planning(inst, None, len(inst.flights())))
        assert b.objective == pytest.approx(a.objective, rel=1e-4)

    def test_big_m_formula_and_fallback(self):
        seg = Segment(("A", "B"), 100.0)
        opts = [ProductOption("A-B", "06:00", "f", 1, 1.0, 0.5), ProductOption("A-B", "07:00", "f", 1, 2.0, 0.0)]
        assert choose_big_m(seg, opts) == pytest.approx(100 * 2.0 / 0.5)
        tight = [ProductOption("A-B", "06:00", "f", 1, 1.0, 1.0)]
        with pytest.raises(BigMError):
            choose_big_m(seg, tight)
        assert choose_big_m(seg, tight, fallback=7.0) == 7.0


class TestLoading:
    def test_parse_od_forms(self):
        assert parse_od("(A,B)") == parse_od("('A', 'B')") == parse_od("A-B") == ("A", "B")

    def test_window(self):
        w = parse_window("Eco-flexi* (10pm-8am)")
        assert w.fare == "Eco-flexi" and w.contains(23.0) and w.contains(7.5) and not w.contains(12.0)

    def test_flight_filter_with_backticks(self):
        assert parse_flight_filter("(OD = (`C', `A') AND Departure Time=`07:40')") == [("C-A", "07:40")]

    def test_missing_v2_names_file(self, tmp_path):
        for f in ("flight.csv", "od_demand.csv", "v1.csv"):
            shutil.copy(SBLP_DIR / f, tmp_path / f)
        with pytest.raises(SblpDataError, match="v2.csv"):
            load_instance(tmp_path)

    def test_ratio_mode_scales_shadow(self):
        a = load_instance(SBLP_DIR)
        b = load_instance(SBLP_DIR, shadow_mode=RATIO)
        for x, y in zip(a.options, b.options):
            assert y.w == pytest.approx(x.w * x.v)

    def test_duplicate_segment(self):
        s = Segment(("A", "B"), 1.0)
        with pytest.raises(SblpDataError):
            GamInstance([s, s], [])
