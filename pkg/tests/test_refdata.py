import json
import shutil

import pytest

from conftest import BENCH, DATA
from leanopt.model import INTEGER, Constraint, LinearExpr, LinearModel, Variable
from leanopt.refdata import (
    ProblemType, StoreError, approx_tokens, check_unique_optimum, load_benchmark, load_refdata, validate_instance,
    value_matches,
)


class TestProblemType:
    @pytest.mark.parametrize("text,expected", [
        ("Resource Allocation", ProblemType.RA),
        ("**Network Revenue Management**", ProblemType.NRM),
        ("The problem type is Transportation Problem.", ProblemType.TP),
        ("FLP", ProblemType.FLP),
        ("Sales-Based Linear Programming (SBLP)", ProblemType.SBLP),
        ("others", ProblemType.OTHERS),
    ])
    def test_parse(self, text, expected):
        assert ProblemType.parse(text) is expected

    def test_unknown(self):
        assert ProblemType.parse("Knapsack") is None

    def test_agnostic_types(self):
        assert {t for t in ProblemType if t.agnostic} == {ProblemType.OTHERS, ProblemType.MIXTURE}


class TestValueMatch:
    def test_relative_rule(self):
        assert value_matches(100.000009, 100)
        assert value_matches(1516456 + 100, 1516456)
        assert not value_matches(1516456 + 200, 1516456)

    def test_absolute_floor_near_zero(self):
        assert value_matches(5e-7, 0)
        assert not value_matches(2e-6, 0)

    def test_missing_value(self):
        assert not value_matches(None, 1.0)
        assert not value_matches(float("nan"), 1.0)

    def test_custom_tolerance(self):
        assert value_matches(101, 100, rel_tol=0.02)


class TestStores:
    def test_reference_store_loads(self):
        store = load_refdata(DATA / "refdata")
        assert store.entries
        for e in store.entries:
            assert e.q and e.g and e.m
            assert e.label_model().n_vars > 0

    def test_benchmark_loads(self):
        ids = [i.id for i in load_benchmark(BENCH)]
        assert ids == ["amazon-nrm", "nike-nrm", "truck-schedule", "diet-subset"]

    def test_bad_manifest(self, tmp_path):
        (tmp_path / "manifest.json").write_text("{")
        with pytest.raises(StoreError, match="unreadable"):
            load_benchmark(tmp_path)

    def test_wrong_kind(self, tmp_path):
        (tmp_path / "manifest.json").write_text(json.dumps({"kind": "refdata", "entries": []}))
        with pytest.raises(StoreError):
            load_benchmark(tmp_path)

    def test_missing_dataset_named(self, tmp_path):
        shutil.copytree(BENCH / "nike-nrm", tmp_path / "nike-nrm")
        (tmp_path / "nike-nrm" / "Nike Shoes Sales.csv").unlink()
        data = json.loads((BENCH / "manifest.json").read_text())
        data["instances"] = [i for i in data["instances"] if i["id"] == "nike-nrm"]
        (tmp_path / "manifest.json").write_text(json.dumps(data))
        with pytest.raises(StoreError, match="Nike Shoes Sales.csv"):
            load_benchmark(tmp_path)

    def test_approx_tokens(self):
        assert approx_tokens("x" * 400) == 100


class TestValidation:
    @pytest.mark.parametrize("iid", ["amazon-nrm", "nike-nrm", "diet-subset"])
    def test_labels_solve_to_stored_values(self, instances, iid):
        rep = validate_instance(instances[iid])
        assert rep.ok and rep.unique, rep

    def test_nike_value(self, instances):
        rep = validate_instance(instances["nike-nrm"])
        assert rep.value == 1516456

    def test_uniqueness_detects_ties(self):
        # max x + y with x + y <= 3: many integer optima
        m = LinearModel("maximize", LinearExpr(((1.0, "x"), (1.0, "y"))),
                        [Variable("x", 0, 3, INTEGER), Variable("y", 0, 3, INTEGER)],
                        [Constraint("c", LinearExpr(((1.0, "x"), (1.0, "y"))), "<=", 3.0)])
        unique, points = check_unique_optimum(m, trials=6)
        assert not unique and len(points) >= 2
