import json

import pytest

from leanopt.agents import (
    AGNOSTIC, TAILORED, PipelineError, PromptError, build_agnostic_workflow, classify, compile_plan,
    csv_schema_snapshot, extract_slots, generate_model, load_prompt, parse_plan, render, route, select_demo,
)
from leanopt.agents.plan import PlanError
from leanopt.evalharness import em_verdict
from leanopt.llm import ScriptedBackend
from leanopt.model import write_lp
from leanopt.refdata import ProblemType
from leanopt.retrieval import parse_csv
from leanopt.solver import solve

PLAN = load_prompt("agnostic_demo_plan")
SHOP = parse_csv("Product,Profit,MachineHours,AssemblyHours,MachineCapacity,AssemblyCapacity\n"
                 "chair,30,2,1,40,30\ntable,50,4,3,,\n", "shop.csv")


class TestPrompts:
    def test_render_fills_only_declared_slots(self):
        text = render("retry", error="x_{i} undefined")
        assert "x_{i} undefined" in text

    def test_slot_values_are_not_rescanned(self):
        text = render("classification", query="{query} stays literal")
        assert "{query} stays literal" in text

    def test_missing_or_extra_slot(self):
        with pytest.raises(PromptError):
            render("retry")
        with pytest.raises(PromptError):
            render("retry", error="e", extra="x")

    def test_extract_slots_inverts_render(self):
        slots = {"q_demo": "Q", "g_demo": "G", "f_demo": "F", "m_demo": "M"}
        assert extract_slots("tailored_workflow", render("tailored_workflow", **slots)) == slots


class TestPlan:
    def test_demo_plan_parses(self):
        plan = parse_plan(PLAN)
        assert plan.var_kinds["x"][0] == "integer"
        assert plan.columns[:1] == ["Profit"]

    def test_compile_reads_numbers_from_csv(self):
        m = compile_plan(PLAN, [SHOP])
        assert m.sense == "maximize"
        assert m.n_vars == 2
        sol = solve(m)
        # 2x + 4y <= 40, x + 3y <= 30, max 30x + 50y over integers -> x=20, y=0
        assert sol.objective == pytest.approx(600)

    def test_missing_step_is_plan_error(self):
        with pytest.raises(PlanError):
            parse_plan(PLAN.split("7. **Formulate Constraints")[0])


class TestClassify:
    def test_scripted_classification(self, pipeline, instances):
        inst = instances["truck-schedule"]
        c = classify(inst.query, pipeline.index, ScriptedBackend.from_file(inst.transcript))
        assert c.type is ProblemType.RA and c.warning is None
        assert any(e.tool == "FileQA" for e in c.trace.events)

    def test_unknown_label_becomes_mixture(self, pipeline):
        c = classify("some query", pipeline.index, ScriptedBackend(["Final Answer: Knapsack"]))
        assert c.type is ProblemType.MIXTURE and "not an allowed type" in c.warning

    def test_failed_loop_becomes_mixture(self, pipeline):
        c = classify("some query", pipeline.index, ScriptedBackend([]))
        assert c.type is ProblemType.MIXTURE and c.warning


class TestWorkflows:
    def test_demo_is_same_type(self, pipeline):
        demo = select_demo(ProblemType.NRM, "hotel rooms sold across nights", pipeline.store.entries)
        assert demo.t is ProblemType.NRM

    def test_agnostic_prompt_carries_snapshot(self):
        wf = build_agnostic_workflow("make furniture", csv_schema_snapshot([SHOP]))
        assert wf.kind == AGNOSTIC and "MachineHours" in wf.text


class TestGolden:
    """Scripted transcripts replayed through the whole pipeline."""

    @pytest.mark.parametrize("iid", ["amazon-nrm", "nike-nrm"])
    def test_tailored_runs_match_labels(self, pipeline, instances, iid):
        inst = instances[iid]
        res = route(inst.query, inst.datasets, pipeline, ScriptedBackend.from_file(inst.transcript))
        assert res.kind == TAILORED and res.type is ProblemType.NRM
        assert em_verdict(res.model, inst.label_model()) == "match"
        assert solve(res.model).objective == pytest.approx(inst.label_optimal)

    def test_runs_are_bit_reproducible(self, pipeline, instances):
        inst = instances["nike-nrm"]
        a = route(inst.query, inst.datasets, pipeline, ScriptedBackend.from_file(inst.transcript))
        b = route(inst.query, inst.datasets, pipeline, ScriptedBackend.from_file(inst.transcript))
        assert write_lp(a.model) == write_lp(b.model)
        assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)

    def test_diet_value_right_structure_wrong(self, pipeline, instances):
        inst = instances["diet-subset"]
        res = route(inst.query, inst.datasets, pipeline, ScriptedBackend.from_file(inst.transcript))
        assert em_verdict(res.model, inst.label_model()) == "mismatch"
        assert solve(res.model).objective == pytest.approx(inst.label_optimal, rel=1e-4)

    def test_parse_failure_retries_then_raises(self, pipeline, instances):
        inst = instances["nike-nrm"]
        backend = ScriptedBackend(["Final Answer: not a model"] * 3)
        with pytest.raises(PipelineError) as exc:
            pipeline.run(inst.query, inst.datasets, backend, force_type=ProblemType.NRM)
        assert len(exc.value.result.traces["model_generation"]) == 3
        assert "3 attempts" in str(exc.value)

    def test_generate_model_recovers_on_retry(self, pipeline, instances):
        inst = instances["nike-nrm"]
        good = json.loads(inst.transcript.read_text())["responses"]
        # drop the classification turns: the generation answer is the last response
        backend = ScriptedBackend(["Final Answer: not a model", good[-1]])
        demo = select_demo(ProblemType.NRM, inst.query, pipeline.store.entries)
        from leanopt.agents import build_tailored_workflow

        gen = generate_model(inst.query, build_tailored_workflow(demo), inst.datasets, backend)
        assert len(gen.traces) == 2
        assert gen.traces[1].name == "model_generation[1]"
