"""Classification, workflow construction, model generation and routing."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..llm import (
    DEFAULT_MAX_STEPS,
    AgentError,
    AgentTrace,
    Backend,
    ChatMessage,
    ChatRequest,
    ScriptExhaustedError,
    TransportError,
    react_loop,
)
from ..model import GrammarError, LinearModel, ModelError, parse_model_grammar, write_lp
from ..refdata import ProblemType, RefEntry, RefStore
from ..retrieval import (
    CsvTable,
    Embedder,
    VectorIndex,
    build_reference_index,
    csv_qa,
    extract_keywords,
    file_qa,
    render_file_qa,
    select_rows,
    top_k,
)
from .formatting import MissingColumnError, TableLike, as_tables, csv_schema_snapshot, format_retrieved_data
from .plan import compile_plan, extract_plan
from .prompts import load_prompt, render

TAILORED = "tailored"
AGNOSTIC = "agnostic"
DEFAULT_RETRIES = 2

FILEQA_DESCRIPTION = ("FileQA: looks up the reference problems most similar to a description "
                      "and returns their descriptions and problem types.")
CSVQA_DESCRIPTION = ("CSVQA: returns the CSV rows related to a retrieval request, one row per line "
                     "with every field named.")


class NoDemoError(LookupError):
    pass


class ModelParseError(RuntimeError):
    """Generated output could not be compiled after every allowed attempt."""

    def __init__(self, message: str, traces: list[AgentTrace], answers: list[str]):
        self.traces = traces
        self.answers = answers
        super().__init__(message)

    @property
    def trace(self) -> Optional[AgentTrace]:
        return self.traces[-1] if self.traces else None


# --------------------------------------------------------------------------- classification


@dataclass
class Classification:
    type: ProblemType
    answer: Optional[str]
    trace: Optional[AgentTrace]
    warning: Optional[str] = None


def _system(tools: dict[str, str]) -> str:
    return render("react_system", tool_descriptions="\n".join(tools.values()), tool_names=", ".join(tools))


def classify(query: str, index: VectorIndex, backend: Backend, max_steps: int = DEFAULT_MAX_STEPS) -> Classification:
    """Ask the classification agent for the problem type, with FileQA over the reference store.

    Answers outside the allowed list become Mixture; a failed loop does too,
    with a warning.
    """
    tools = {"FileQA": lambda text: render_file_qa(file_qa(index, text))}
    try:
        answer, trace = react_loop(backend, _system({"FileQA": FILEQA_DESCRIPTION}), tools,
                                   render("classification", query=query), max_steps, name="classification")
    except AgentError as exc:
        return Classification(ProblemType.MIXTURE, None, exc.trace, f"classification failed: {exc}")
    except (ScriptExhaustedError, TransportError) as exc:
        return Classification(ProblemType.MIXTURE, None, None, f"classification failed: {exc}")
    t = ProblemType.parse(answer)
    if t is None:
        return Classification(ProblemType.MIXTURE, answer, trace, f"answer {answer!r} is not an allowed type")
    return Classification(t, answer, trace)


# --------------------------------------------------------------------------- workflows


@dataclass(frozen=True)
class WorkflowPrompt:
    kind: str
    text: str
    slots: dict
    demo_id: Optional[str] = None
    problem_type: Optional[ProblemType] = None


def select_demo(ptype: ProblemType, query: str, entries: Sequence[RefEntry],
                provider: Optional[Embedder] = None) -> RefEntry:
    """Most similar reference entry of the same type; ties go to the smaller id."""
    if ptype.agnostic:
        raise ValueError(f"{ptype.value} has no tailored demo")
    same = [e for e in entries if e.t is ptype]
    if not same:
        raise NoDemoError(f"no reference entry of type {ptype.value}")
    index = build_reference_index(same, provider)
    rec, _ = top_k(index, query, 1)[0]
    return rec.payload


def build_tailored_workflow(demo: RefEntry) -> WorkflowPrompt:
    slots = {"q_demo": demo.q, "g_demo": demo.g, "f_demo": demo.f, "m_demo": demo.m}
    empty = [k for k, v in slots.items() if not v or not v.strip()]
    if empty:
        raise ValueError(f"demo {demo.id!r} has empty field(s): {', '.join(empty)}")
    return WorkflowPrompt(TAILORED, render("tailored_workflow", **slots), slots, demo.id, demo.t)


def build_agnostic_workflow(query: str, snapshot: str, demo: Optional[RefEntry] = None) -> WorkflowPrompt:
    """Abstract Model Plan prompt; the example defaults to the shipped demo plan."""
    q_demo = demo.q if demo else load_prompt("agnostic_demo_query")
    m_demo = demo.m if demo else load_prompt("agnostic_demo_plan")
    slots = {"q_demo": q_demo, "m_demo": m_demo, "query": query, "snapshot": snapshot}
    return WorkflowPrompt(AGNOSTIC, render("agnostic_workflow", **slots), slots, demo.id if demo else None)


# --------------------------------------------------------------------------- model generation


def csvqa_tool(tables: Sequence[CsvTable], ptype: Optional[ProblemType]):
    """CSVQA with type-aware layout; falls back to plain rows when a layout's columns are absent."""

    def run(request: str) -> str:
        if ptype in (ProblemType.TP, ProblemType.AP, ProblemType.FLP):
            keywords = extract_keywords(request)
            picked = [CsvTable(t.name, t.header, tuple(select_rows(t, keywords))) for t in tables]
            try:
                return format_retrieved_data(ptype, picked)
            except MissingColumnError:
                pass
        return csv_qa(tables, request)

    return run


def _single_turn(backend: Backend, prompt: str, name: str) -> tuple[str, AgentTrace]:
    trace = AgentTrace(name)
    trace.add("prompt", prompt)
    reply = backend.complete(ChatRequest((ChatMessage("user", prompt),)))
    trace.add("final_answer", reply)
    return reply, trace


@dataclass
class GenerationResult:
    model: LinearModel
    answer: str
    traces: list[AgentTrace]

    @property
    def trace(self) -> AgentTrace:
        return self.traces[-1]


def generate_model(query: str, workflow: WorkflowPrompt, datasets: Sequence[TableLike], backend: Backend,
                   max_steps: int = DEFAULT_MAX_STEPS, retries: int = DEFAULT_RETRIES) -> GenerationResult:
    """Run the model-generation agent and compile its answer, retrying on parse failure.

    Tailored: a ReAct loop with CSVQA whose final answer is the model grammar.
    Agnostic: one completion producing a plan whose named columns are read
    from the datasets.
    """
    tables = as_tables(datasets)
    traces: list[AgentTrace] = []
    answers: list[str] = []
    error: Optional[Exception] = None
    for attempt in range(retries + 1):
        suffix = "" if error is None else "\n\n" + render("retry", error=str(error))
        if workflow.kind == TAILORED:
            question = render("model_generation", workflow=workflow.text, query=query) + suffix
            tools = {"CSVQA": csvqa_tool(tables, workflow.problem_type)}
            answer, trace = react_loop(backend, _system({"CSVQA": CSVQA_DESCRIPTION}), tools, question,
                                       max_steps, name=f"model_generation[{attempt}]")
        else:
            answer, trace = _single_turn(backend, workflow.text + suffix, f"model_plan[{attempt}]")
        traces.append(trace)
        answers.append(answer)
        try:
            if workflow.kind == TAILORED:
                model = parse_model_grammar(answer)
            else:
                model = compile_plan(extract_plan(answer), tables)
            return GenerationResult(model, answer, traces)
        except (GrammarError, ModelError) as exc:
            error = exc
    raise ModelParseError(f"model output unusable after {retries + 1} attempts: {error}", traces, answers)


# --------------------------------------------------------------------------- routing


@dataclass
class PipelineResult:
    type: ProblemType
    kind: str
    model: Optional[LinearModel]
    answer: Optional[str]
    traces: dict[str, list[AgentTrace]]
    workflow: Optional[WorkflowPrompt] = None
    warnings: list[str] = field(default_factory=list)
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "type": self.type.value,
            "type_code": self.type.code,
            "kind": self.kind,
            "demo_id": self.workflow.demo_id if self.workflow else None,
            "answer": self.answer,
            "lp": write_lp(self.model) if self.model is not None else None,
            "warnings": list(self.warnings),
            "error": self.error,
            "traces": {k: [t.to_dict() for t in v] for k, v in self.traces.items()},
        }


class PipelineError(RuntimeError):
    def __init__(self, message: str, result: PipelineResult):
        self.result = result
        super().__init__(message)


@dataclass
class Pipeline:
    """Shared read-only stores plus budgets; ``run`` is one sequential pipeline pass."""

    store: RefStore
    provider: Optional[Embedder] = None
    max_steps: int = DEFAULT_MAX_STEPS
    retries: int = DEFAULT_RETRIES
    snapshot_rows: int = 5
    _index: Optional[VectorIndex] = field(default=None, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    @property
    def index(self) -> VectorIndex:
        with self._lock:
            if self._index is None:
                self._index = build_reference_index(self.store.entries, self.provider)
            return self._index

    def run(self, query: str, datasets: Sequence[TableLike], backend: Backend,
            force_type: Optional[ProblemType] = None) -> PipelineResult:
        tables = as_tables(datasets)
        traces: dict[str, list[AgentTrace]] = {}
        warnings: list[str] = []
        if force_type is None:
            c = classify(query, self.index, backend, self.max_steps)
            if c.trace is not None:
                traces["classification"] = [c.trace]
            if c.warning:
                warnings.append(c.warning)
            ptype = c.type
        else:
            ptype = force_type
        workflow = None
        if not ptype.agnostic:
            try:
                workflow = build_tailored_workflow(select_demo(ptype, query, self.store.entries, self.provider))
            except NoDemoError as exc:
                warnings.append(f"{exc}; using the type-agnostic workflow")
        if workflow is None:
            workflow = build_agnostic_workflow(query, csv_schema_snapshot(tables, self.snapshot_rows))
        result = PipelineResult(ptype, workflow.kind, None, None, traces, workflow, warnings)
        try:
            gen = generate_model(query, workflow, tables, backend, self.max_steps, self.retries)
        except ModelParseError as exc:
            traces["model_generation"] = exc.traces
            result.error = str(exc)
            raise PipelineError(str(exc), result) from exc
        except AgentError as exc:
            traces["model_generation"] = [exc.trace]
            result.error = str(exc)
            raise PipelineError(str(exc), result) from exc
        except (ScriptExhaustedError, TransportError) as exc:
            result.error = str(exc)
            raise PipelineError(str(exc), result) from exc
        traces["model_generation"] = gen.traces
        result.model = gen.model
        result.answer = gen.answer
        return result


def route(query: str, datasets: Sequence[TableLike], pipeline: Pipeline, backend: Backend,
          force_type: Optional[ProblemType] = None) -> PipelineResult:
    """classify, then tailored or agnostic workflow, then model generation."""
    return pipeline.run(query, datasets, backend, force_type)
