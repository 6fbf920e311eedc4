import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATAGEN_DIR
from leanopt.datagen import (
    EARTH_RADIUS_MILES, NRM_HEADER, DataGenWarning, Location, RngSpec, SalesRecord, customer_demand, gen_flp_setup_costs,
    gen_nrm, gen_tp_costs, haversine_miles, read_locations, read_sales, round_up_to_ten, write_nrm_csv,
)

units = st.integers(0, 10_000)


class TestNrm:
    @settings(max_examples=200, deadline=None)
    @given(st.lists(units, min_size=1, max_size=30), st.integers(0, 2 ** 32))
    def test_demand_and_inventory_bounds(self, us, seed):
        rows = gen_nrm([SalesRecord(f"p{k}", u, 10.0) for k, u in enumerate(us)], RngSpec(seed))
        for u, r in zip(us, rows):
            assert math.ceil(1.2 * u) <= r.demand <= math.ceil(1.5 * u)
            assert r.initial_inventory == round_up_to_ten(10 * u)
            assert r.initial_inventory % 10 == 0 and r.initial_inventory >= 10 * u

    def test_round_up_to_ten(self):
        assert [round_up_to_ten(x) for x in (0, 1, 10, 11, 410)] == [0, 10, 10, 20, 410]

    def test_rejects_bad_units(self):
        with pytest.raises(ValueError):
            gen_nrm([("a", -1, 1.0)])
        with pytest.raises(ValueError):
            gen_nrm([("a", 2.5, 1.0)])

    def test_fixture_header_and_bytes(self, tmp_path):
        recs = read_sales(DATAGEN_DIR / "sales.csv")
        a = write_nrm_csv(gen_nrm(recs, RngSpec(7)), tmp_path / "a.csv")
        b = write_nrm_csv(gen_nrm(recs, RngSpec(7)), tmp_path / "b.csv")
        c = write_nrm_csv(gen_nrm(recs, RngSpec(8)), tmp_path / "c.csv")
        assert a.read_text().splitlines()[0] == ",".join(NRM_HEADER)
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes() != c.read_bytes()

    @settings(max_examples=30, deadline=None)
    @given(st.lists(units, min_size=1, max_size=10), st.integers(0, 2 ** 32))
    def test_same_seed_same_bytes(self, us, seed):
        import tempfile
        from pathlib import Path

        recs = [SalesRecord(f"p{k}", u, 1.5 * k) for k, u in enumerate(us)]
        with tempfile.TemporaryDirectory() as d:
            a = write_nrm_csv(gen_nrm(recs, RngSpec(seed)), Path(d) / "a.csv").read_bytes()
            b = write_nrm_csv(gen_nrm(recs, RngSpec(seed)), Path(d) / "b.csv").read_bytes()
        assert a == b


class TestRng:
    def test_bad_seed(self):
        for bad in (-1, 1.5, "3", True):
            with pytest.raises(ValueError):
                RngSpec(bad)

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError):
            RngSpec(1, "XorShift")

    def test_child_streams_differ(self):
        s = RngSpec(5)
        assert s.child(0).generator().random() != s.child(1).generator().random()
        assert s.child(0).generator().random() == RngSpec(5).child(0).generator().random()


class TestDistances:
    def test_poles(self):
        assert haversine_miles((90, 0), (-90, 0)) == pytest.approx(math.pi * EARTH_RADIUS_MILES)

    def test_known_pair(self):
        # New York to Los Angeles is about 2,445 miles along a great circle
        assert haversine_miles((40.7128, -74.0060), (34.0522, -118.2437)) == pytest.approx(2445, rel=0.01)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-90, 90), st.floats(-180, 180), st.floats(-90, 90), st.floats(-180, 180))
    def test_symmetric_and_bounded(self, a, b, c, d):
        x = haversine_miles((a, b), (c, d))
        assert x == pytest.approx(haversine_miles((c, d), (a, b)), abs=1e-6)
        assert 0 <= x <= math.pi * EARTH_RADIUS_MILES + 1e-6

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            haversine_miles((91, 0), (0, 0))


class TestTransport:
    def locs(self):
        return read_locations(DATAGEN_DIR / "locations.csv")

    def test_costs_are_distance_times_a_listed_rate(self):
        table = self.locs()
        by_name = {l.name: l for l in table.locations}
        costs = gen_tp_costs(table.locations, [1.2, 1.5], RngSpec(3))
        assert len(costs.suppliers) == 3 and len(costs.customers) == 3
        for i, s in enumerate(costs.suppliers):
            for j, c in enumerate(costs.customers):
                d = haversine_miles((by_name[s].lat, by_name[s].lon), (by_name[c].lat, by_name[c].lon))
                assert min(abs(costs.matrix[i, j] - d * r) for r in (1.2, 1.5)) < 1e-9

    def test_missing_demand_dropped_with_warning(self):
        costs = gen_tp_costs([Location("A", 0, 0), Location("B", 1, 1), Location("C", 2, 2), Location("D", 3, 3)],
                             [1.0], RngSpec(0))
        demand = {c: 5.0 for c in costs.customers[1:]}
        with pytest.warns(DataGenWarning):
            trimmed, rows, dropped = customer_demand(costs, demand)
        assert dropped == costs.customers[:1]
        assert trimmed.matrix.shape == (2, 1)
        assert rows == [(costs.customers[1], 5.0)]

    def test_no_warning_when_complete(self):
        costs = gen_tp_costs([Location("A", 0, 0), Location("B", 1, 1)], [1.0], RngSpec(0))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            customer_demand(costs, {costs.customers[0]: 1.0})

    def test_duplicate_names(self):
        with pytest.raises(ValueError):
            gen_tp_costs([Location("A", 0, 0), Location("A", 1, 1)], [1.0])


class TestFacility:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 50), st.integers(0, 2 ** 32))
    def test_setup_costs_in_closed_range(self, n, seed):
        xs = gen_flp_setup_costs(n, (10000, 50000), RngSpec(seed))
        assert len(xs) == n and all(10000 <= x <= 50000 for x in xs)

    def test_degenerate_range_hits_endpoint(self):
        assert gen_flp_setup_costs(3, (7, 7)) == [7, 7, 7]

    def test_bad_range(self):
        with pytest.raises(ValueError):
            gen_flp_setup_costs(2, (5, 1))
