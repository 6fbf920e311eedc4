import json
import shutil
from pathlib import Path

import jsonschema
import pytest

from conftest import BENCH, DATAGEN_DIR, SBLP_DIR
from leanopt.cli import Config, UsageError, load_config, main

SCHEMAS = Path(__file__).resolve().parents[1] / "src" / "leanopt" / "schemas"
CA_FILTER = ("(OD = ('A', 'C') AND Departure Time='23:00'), (OD = ('C', 'A') AND Departure Time='07:40'), "
             "(OD = ('B', 'A') AND Departure Time='09:05')")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    import os

    for k in list(os.environ):
        if k.startswith("LEAN_OPT_"):
            monkeypatch.delenv(k)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, schema, *argv, expect=0):
    code, out, err = run(capsys, *argv, "--json")
    assert code == expect, err
    doc = json.loads(out)
    jsonschema.validate(doc, json.loads((SCHEMAS / f"{schema}.json").read_text()))
    return doc


def test_query_given_as_text(capsys, tmp_path):
    d = BENCH / "truck-schedule"
    code, out, _ = run(capsys, "classify", (d / "query.txt").read_text(), "--script", d / "transcript.json",
                       "--out", tmp_path)
    assert code == 0 and out.startswith("Resource Allocation")


class TestConfig:
    def test_defaults(self):
        cfg = load_config(env={})
        assert cfg == Config()

    def test_file_env_and_flag_precedence(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[leanopt]\nmax_steps = 4\nretries = 1\nrel_tol = 0.001\n")
        cfg = load_config(ini, env={"LEAN_OPT_RETRIES": "5"}, overrides={"max_steps": 9})
        assert (cfg.max_steps, cfg.retries, cfg.rel_tol) == (9, 5, 0.001)

    def test_secret_in_file_rejected(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[leanopt]\napi_key = abc\n")
        with pytest.raises(UsageError, match="environment"):
            load_config(ini, env={})

    def test_unknown_key_and_bad_number(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[leanopt]\nbogus = 1\n")
        with pytest.raises(UsageError):
            load_config(ini, env={})
        with pytest.raises(UsageError):
            load_config(env={"LEAN_OPT_MAX_STEPS": "many"})

    def test_remote_needs_endpoint_and_token(self):
        with pytest.raises(UsageError, match="endpoint"):
            load_config(env={"LEAN_OPT_BACKEND": "remote"})
        with pytest.raises(UsageError, match="LEAN_OPT_API_KEY"):
            load_config(env={"LEAN_OPT_BACKEND": "remote", "LEAN_OPT_ENDPOINT": "http://x", "LEAN_OPT_MODEL": "m"})
        cfg = load_config(env={"LEAN_OPT_BACKEND": "remote", "LEAN_OPT_ENDPOINT": "http://x",
                               "LEAN_OPT_MODEL": "m", "LEAN_OPT_API_KEY": "t"})
        assert cfg.backend == "remote"


class TestClassify:
    def test_prints_type_and_trace(self, capsys, tmp_path):
        d = BENCH / "truck-schedule"
        code, out, _ = run(capsys, "classify", d / "query.txt", "--script", d / "transcript.json", "--out", tmp_path)
        assert code == 0
        assert out.splitlines()[0] == "Resource Allocation"
        assert (tmp_path / "classification_trace.json").is_file()

    def test_json(self, capsys, tmp_path):
        d = BENCH / "truck-schedule"
        doc = run_json(capsys, "classify", "classify", d / "query.txt", "--script", d / "transcript.json",
                       "--out", tmp_path)
        assert doc["type_code"] == "RA"

    def test_missing_file(self, capsys, tmp_path):
        doc = run_json(capsys, "error", "classify", tmp_path / "nope.txt", "--out", tmp_path, expect=2)
        assert "nope.txt" in doc["error"]

    def test_scripted_needs_script(self, capsys, tmp_path):
        d = BENCH / "truck-schedule"
        code, _, err = run(capsys, "classify", d / "query.txt", "--out", tmp_path)
        assert code == 2 and "--script" in err


class TestFormulate:
    def test_nike_lp_solves_to_label(self, capsys, tmp_path):
        d = BENCH / "nike-nrm"
        doc = run_json(capsys, "formulate", "formulate", d / "query.txt", d, "--script", d / "transcript.json",
                       "--out", tmp_path / "f", "--solve")
        assert doc["workflow"] == "tailored"
        assert doc["solution"]["objective"] == pytest.approx(1516456)
        solved = run_json(capsys, "solve", "solve", doc["lp_path"], "--out", tmp_path / "s")
        assert solved["objective"] == pytest.approx(1516456)
        assert Path(doc["model_path"]).read_text().strip()

    def test_agnostic_writes_plan(self, capsys, tmp_path):
        d = BENCH / "truck-schedule"
        doc = run_json(capsys, "formulate", "formulate", d / "query.txt", d, "--agnostic",
                       "--script", d / "transcript_agnostic.json", "--out", tmp_path)
        assert doc["workflow"] == "agnostic"
        assert "Define Decision Variables" in Path(doc["plan_path"]).read_text()

    def test_parse_failure_exit_1_with_traces(self, capsys, tmp_path):
        d = BENCH / "nike-nrm"
        script = tmp_path / "bad.json"
        script.write_text(json.dumps({"responses": ["Final Answer: not a model"] * 3}))
        doc = run_json(capsys, "error", "formulate", d / "query.txt", d, "--type", "NRM", "--script", script,
                       "--out", tmp_path, expect=1)
        assert Path(doc["trace_path"]).is_file()


class TestSolve:
    def test_trivial(self, capsys, tmp_path):
        lp = tmp_path / "t.lp"
        lp.write_text("Maximize\n obj: x + y\nSubject To\n c1: x + y <= 5\nEnd\n")
        code, out, _ = run(capsys, "solve", lp, "--out", tmp_path)
        assert code == 0 and "objective: 5" in out

    def test_infeasible(self, capsys, tmp_path):
        lp = tmp_path / "i.lp"
        lp.write_text("Maximize\n obj: x\nSubject To\n c1: x >= 5\n c2: x <= 3\nEnd\n")
        assert run(capsys, "solve", lp, "--out", tmp_path)[0] == 1
        doc = run_json(capsys, "solve", "solve", lp, "--allow-infeasible", "--out", tmp_path)
        assert doc["status"] == "infeasible" and doc["objective"] is None

    def test_grammar_file(self, capsys, tmp_path):
        doc = run_json(capsys, "solve", "solve", BENCH / "nike-nrm" / "label.txt", "--out", tmp_path)
        assert doc["objective"] == 1516456


class TestEvaluate:
    def bench(self, tmp_path, ids=("amazon-nrm", "nike-nrm")):
        data = json.loads((BENCH / "manifest.json").read_text())
        data["instances"] = [i for i in data["instances"] if i["id"] in ids]
        for i in ids:
            shutil.copytree(BENCH / i, tmp_path / "bench" / i)
        (tmp_path / "bench" / "manifest.json").write_text(json.dumps(data))
        return tmp_path / "bench"

    def test_report_files_and_repetitions(self, capsys, tmp_path):
        doc = run_json(capsys, "evaluate", "evaluate", self.bench(tmp_path), "--repetitions", 3, "--workers", 2,
                       "--out", tmp_path / "out")
        assert doc["report"]["repetitions"] == 3 and doc["report"]["runs"] == 6
        for key in ("json", "text", "csv", "timing", "fig_tokens", "fig_vars"):
            assert Path(doc["files"][key]).is_file()

    def test_unreadable_manifest(self, capsys, tmp_path):
        (tmp_path / "manifest.json").write_text("{")
        code, _, err = run(capsys, "evaluate", tmp_path, "--out", tmp_path / "o")
        assert code == 2 and "manifest" in err


class TestDatagen:
    def test_nrm_header_and_determinism(self, capsys, tmp_path):
        doc = run_json(capsys, "datagen", "datagen", "nrm", DATAGEN_DIR / "sales.csv", "--seed", 7,
                       "--out", tmp_path / "a")
        run_json(capsys, "datagen", "datagen", "nrm", DATAGEN_DIR / "sales.csv", "--seed", 7, "--out", tmp_path / "b")
        a = Path(doc["files"][0]).read_bytes()
        assert a.decode().splitlines()[0] == "Product Name,Revenue,Demand,Initial Inventory"
        assert a == (tmp_path / "b" / "NRM_data.csv").read_bytes()

    @pytest.mark.parametrize("kind,files", [("tp", {"tp_costs.csv", "tp_demand.csv"}),
                                            ("flp", {"flp_costs.csv", "flp_setup_costs.csv"})])
    def test_locations(self, capsys, tmp_path, kind, files):
        doc = run_json(capsys, "datagen", "datagen", kind, DATAGEN_DIR / "locations.csv", "--out", tmp_path)
        assert {Path(f).name for f in doc["files"]} == files

    @pytest.mark.parametrize("seed", ["-1", "abc"])
    def test_bad_seed_is_usage_error(self, capsys, seed):
        with pytest.raises(SystemExit) as exc:
            main(["datagen", "nrm", str(DATAGEN_DIR / "sales.csv"), "--seed", seed])
        assert exc.value.code == 2


class TestSblp:
    def test_build_with_consumption_pair(self, capsys, tmp_path):
        doc = run_json(capsys, "sblp", "sblp", "build", SBLP_DIR, "--flights", CA_FILTER, "--consumption", "2", "1",
                       "--out", tmp_path)
        assert doc["consumption"] == {"Eco-flexi": 2.0, "Eco-lite": 1.0}
        assert " cap_AC_2300: 2 x_AC_2300_Ecoflexi + x_AC_2300_Ecolite <= 180" in Path(doc["lp_path"]).read_text()
        assert doc["status"] == "optimal"

    def test_plan_cardinality(self, capsys, tmp_path):
        doc = run_json(capsys, "sblp", "sblp", "plan", SBLP_DIR, "-Z", 9, "--no-solve", "--out", tmp_path)
        lp = Path(doc["lp_path"]).read_text()
        assert any(line.strip().startswith("cardinality:") and line.rstrip().endswith("<= 9")
                   for line in lp.splitlines())

    def test_plan_solves_small_filter(self, capsys, tmp_path):
        doc = run_json(capsys, "sblp", "sblp", "plan", SBLP_DIR, "--flights", CA_FILTER, "-Z", 2,
                       "--consumption", "Eco-flexi=3.1", "Eco-lite=1", "--out", tmp_path)
        assert len(doc["selected_flights"]) <= 2

    def test_missing_v2(self, capsys, tmp_path):
        for f in ("flight.csv", "od_demand.csv", "v1.csv"):
            shutil.copy(SBLP_DIR / f, tmp_path / f)
        doc = run_json(capsys, "error", "sblp", "build", tmp_path, "--out", tmp_path / "o", expect=2)
        assert "v2.csv" in doc["error"]

    def test_bad_consumption(self, capsys, tmp_path):
        code, _, err = run(capsys, "sblp", "build", SBLP_DIR, "--consumption", "Business=2", "--out", tmp_path)
        assert code == 2 and "Business" in err
