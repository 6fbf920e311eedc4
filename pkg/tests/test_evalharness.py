import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leanopt.evalharness import (
    FAILED, MATCH, MISMATCH, NOT_PROVEN, RESULT_FIELDS, Report, RunResult, bucket_label, bucket_labels,
    em_accuracy, em_verdict, load_results_csv, modeling_accuracy, not_proven_rate, run_benchmark, wmape,
)
from leanopt.model import LinearExpr, LinearModel, Variable

DUMMY = LinearModel("maximize", LinearExpr(((1.0, "x"),)), [Variable("x", 0, 1)])


def rr(iid, value, label=100.0, em=MATCH, tokens=100, n_vars=5, rep=0, typ="NRM"):
    model = DUMMY if value is not None else None
    status = "optimal" if value is not None else FAILED
    return RunResult(iid, typ, rep, label, tokens, n_vars, model, status, value, em if model else MISMATCH)


class TestMetrics:
    def test_wmape_hand_value(self):
        assert wmape([100, 100], [90, 80]) == pytest.approx(0.15)

    def test_wmape_failure_counts_as_zero(self):
        assert wmape([100, 100], [100, 0]) == pytest.approx(0.5)

    def test_wmape_errors(self):
        with pytest.raises(ValueError):
            wmape([1, 2], [1])
        with pytest.raises(ValueError):
            wmape([0, 0], [0, 0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1, 1e6), min_size=1, max_size=20))
    def test_wmape_zero_on_exact(self, opt):
        assert wmape(opt, opt) == 0.0

    def test_modeling_accuracy_two_of_four(self):
        runs = [rr("a", 100), rr("b", 100.000009), rr("c", 90), rr("d", None)]
        assert modeling_accuracy(runs) == 0.5

    def test_em_and_not_proven(self):
        runs = [rr("a", 100), rr("b", 100, em=NOT_PROVEN), rr("c", 100, em=MISMATCH), rr("d", None)]
        assert em_accuracy(runs) == 0.25
        assert not_proven_rate(runs) == 0.25

    def test_empty_inputs(self):
        assert modeling_accuracy([]) == em_accuracy([]) == not_proven_rate([]) == 0.0

    def test_value_without_model_rejected(self):
        with pytest.raises(ValueError):
            RunResult("a", "NRM", 0, 1.0, 1, 1, None, "optimal", 1.0)


class TestBuckets:
    def test_labels(self):
        assert bucket_labels((0, 200, 400, 800)) == ["[0,200)", "[200,400)", "[400,800)", "[800,inf)"]
        assert bucket_label(199, (0, 200, 400, 800)) == "[0,200)"
        assert bucket_label(200, (0, 200, 400, 800)) == "[200,400)"
        assert bucket_label(10_000, (0, 200, 400, 800)) == "[800,inf)"

    def test_var_groups(self):
        edges = (0, 20, 100)
        assert [bucket_label(n, edges) for n in (19, 20, 99, 100)] == ["[0,20)", "[20,100)", "[20,100)", "[100,inf)"]


class TestReport:
    def report(self):
        runs = [rr("a", 100, tokens=50, n_vars=5), rr("b", 90, tokens=250, n_vars=30, em=MISMATCH),
                rr("c", None, tokens=900, n_vars=150, typ="RA"), rr("d", 100, tokens=50, n_vars=5, typ="RA")]
        return Report(runs, 1)

    def test_grouping(self):
        r = self.report()
        assert r.by_type()["NRM"]["modeling_accuracy"] == 0.5
        assert r.by_type()["RA"]["n"] == 2
        assert r.by_tokens()["[400,800)"]["n"] == 0
        # the failed run is grouped by its label variable count
        assert r.by_vars()["[100,inf)"]["n"] == 1
        assert r.by_vars()["[100,inf)"]["wmape"] == 1.0

    def test_consistency_violation_detected(self):
        r = Report([rr("a", 50, em=MATCH)], 1)
        assert r.consistency_violations() == ["a#0"]

    def test_text_layout(self):
        text = self.report().to_text()
        assert "Overall" in text and "WMAPE" in text and "-0.0" not in text

    def test_files(self, tmp_path):
        paths = self.report().write(tmp_path, figures=True)
        assert json.loads(paths["json"].read_text())["runs"] == 4
        rows = load_results_csv(paths["csv"])
        assert list(rows[0]) == list(RESULT_FIELDS)
        assert [r["value_match"] for r in rows] == ["1", "0", "0", "1"]
        assert paths["fig_tokens"].stat().st_size > 0

    def test_tolerance_is_configurable(self):
        runs = [rr("a", 101)]
        assert Report(runs, 1).modeling_accuracy == 0.0
        assert Report(runs, 1, rel_tol=0.02).modeling_accuracy == 1.0


class TestRunBenchmark:
    def test_value_match_with_em_mismatch(self, pipeline, instances):
        rep = run_benchmark(pipeline, [instances["diet-subset"]])
        (r,) = rep.results
        assert r.value_match and r.em_verdict == MISMATCH

    def test_repetitions_and_order(self, pipeline, instances):
        insts = [instances["amazon-nrm"], instances["nike-nrm"]]
        rep = run_benchmark(pipeline, insts, repetitions=3, workers=3)
        assert [(r.instance_id, r.repetition) for r in rep.results] == [
            (i.id, k) for i in insts for k in range(3)]
        assert rep.modeling_accuracy == 1.0
        assert em_accuracy(rep.results) == 1.0

    def test_backend_failure_becomes_row(self, pipeline, instances):
        def broken(inst, rep):
            raise RuntimeError("no backend")

        rep = run_benchmark(pipeline, [instances["nike-nrm"]], backend_factory=broken)
        assert rep.results[0].status == FAILED and "no backend" in rep.results[0].error

    def test_em_verdict_helper(self, instances):
        label = instances["nike-nrm"].label_model()
        assert em_verdict(label, label) == MATCH
        assert em_verdict(DUMMY, label) == MISMATCH
