"""Benchmark runs and the accuracy tables built from them.

Every figure in a :class:`Report` is recomputed from its raw
:class:`RunResult` rows, so a report can be rebuilt from ``results.csv``
without trusting any cached number.
"""
from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .agents import Pipeline, PipelineError
from .llm import Backend, ScriptedBackend
from .model import AmbiguityError, LinearModel, models_equivalent, write_lp
from .refdata import ABS_TOL, REL_TOL, BenchmarkInstance, value_matches
from .solver import OPTIMAL, solve

MATCH, MISMATCH, NOT_PROVEN = "match", "mismatch", "not_proven"
FAILED = "failed"
TOKEN_EDGES = (0, 200, 400, 800)  # bucket lower edges; the last bucket is open-ended
VAR_EDGES = (0, 20, 100)  # small / medium / large formulations


def modeling_accuracy(results: Sequence["RunResult"], rel_tol: float = REL_TOL, abs_tol: float = ABS_TOL) -> float:
    """Share of runs whose solved value matches the label value; failures count as misses."""
    if not results:
        return 0.0
    return sum(value_matches(r.value, r.label_value, rel_tol, abs_tol) for r in results) / len(results)


def em_accuracy(results: Sequence["RunResult"]) -> float:
    """Share of runs proven structurally equal to the label; not_proven counts as a miss."""
    if not results:
        return 0.0
    return sum(r.em_verdict == MATCH for r in results) / len(results)


def not_proven_rate(results: Sequence["RunResult"]) -> float:
    if not results:
        return 0.0
    return sum(r.em_verdict == NOT_PROVEN for r in results) / len(results)


def wmape(opt: Sequence[float], rev: Sequence[float]) -> float:
    """sum(opt - rev) / sum(opt); a failed formulation enters with rev = 0."""
    if len(opt) != len(rev):
        raise ValueError(f"length mismatch: {len(opt)} optimal values, {len(rev)} revenues")
    total = float(sum(opt))
    if total <= 0:
        raise ValueError("sum of optimal values must be positive")
    return float(sum(o - r for o, r in zip(opt, rev))) / total


def bucket_label(x: float, edges: Sequence[float]) -> str:
    for k in range(len(edges) - 1, -1, -1):
        if x >= edges[k]:
            return f"[{edges[k]},{edges[k + 1]})" if k + 1 < len(edges) else f"[{edges[k]},inf)"
    return f"(-inf,{edges[0]})"


def bucket_labels(edges: Sequence[float]) -> list[str]:
    return [f"[{edges[k]},{edges[k + 1]})" for k in range(len(edges) - 1)] + [f"[{edges[-1]},inf)"]


@dataclass
class RunResult:
    instance_id: str
    type: str  # declared type code of the instance
    repetition: int
    label_value: float
    approx_tokens: int
    label_n_vars: int
    model: Optional[LinearModel] = None
    status: str = FAILED
    value: Optional[float] = None
    em_verdict: str = MISMATCH
    predicted_type: Optional[str] = None
    workflow: Optional[str] = None
    error: Optional[str] = None
    traces: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def __post_init__(self):
        if self.value is not None and self.model is None:
            raise ValueError("a solved value needs a generated model")

    @property
    def value_match(self) -> bool:
        return value_matches(self.value, self.label_value)

    def matches(self, rel_tol: float = REL_TOL, abs_tol: float = ABS_TOL) -> bool:
        return value_matches(self.value, self.label_value, rel_tol, abs_tol)

    @property
    def n_vars(self) -> Optional[int]:
        return self.model.n_vars if self.model is not None else None

    @property
    def size_vars(self) -> int:
        """Generated variable count, or the label's when generation failed."""
        return self.n_vars if self.n_vars is not None else self.label_n_vars

    @property
    def revenue(self) -> float:
        return self.value if self.value is not None else 0.0

    def row(self, rel_tol: float = REL_TOL, abs_tol: float = ABS_TOL) -> dict:
        return {
            "instance": self.instance_id, "type": self.type, "repetition": self.repetition,
            "predicted_type": self.predicted_type or "", "workflow": self.workflow or "",
            "status": self.status, "value": "" if self.value is None else repr(float(self.value)),
            "label_value": repr(float(self.label_value)), "value_match": int(self.matches(rel_tol, abs_tol)),
            "em_verdict": self.em_verdict, "n_vars": "" if self.n_vars is None else self.n_vars,
            "label_n_vars": self.label_n_vars, "approx_tokens": self.approx_tokens, "error": self.error or "",
        }


RESULT_FIELDS = ("instance", "type", "repetition", "predicted_type", "workflow", "status", "value", "label_value",
                 "value_match", "em_verdict", "n_vars", "label_n_vars", "approx_tokens", "error")


def _group_stats(results: Sequence[RunResult], rel_tol: float = REL_TOL, abs_tol: float = ABS_TOL) -> dict:
    return {
        "n": len(results),
        "modeling_accuracy": modeling_accuracy(results, rel_tol, abs_tol) if results else None,
        "em_accuracy": em_accuracy(results) if results else None,
        "not_proven": not_proven_rate(results) if results else None,
    }


def _wmape_or_none(results: Sequence[RunResult]) -> Optional[float]:
    opt = [r.label_value for r in results]
    if not results or sum(opt) <= 0:
        return None
    return wmape(opt, [r.revenue for r in results])


@dataclass
class Report:
    results: list[RunResult]
    repetitions: int = 1
    token_edges: tuple = TOKEN_EDGES
    var_edges: tuple = VAR_EDGES
    rel_tol: float = REL_TOL
    abs_tol: float = ABS_TOL

    def _stats(self, results: Sequence[RunResult]) -> dict:
        return _group_stats(results, self.rel_tol, self.abs_tol)

    @property
    def instance_count(self) -> int:
        return len({r.instance_id for r in self.results})

    @property
    def modeling_accuracy(self) -> float:
        return modeling_accuracy(self.results, self.rel_tol, self.abs_tol)

    @property
    def em_accuracy(self) -> float:
        return em_accuracy(self.results)

    def by_type(self) -> dict[str, dict]:
        types = sorted({r.type for r in self.results})
        return {t: self._stats([r for r in self.results if r.type == t]) for t in types}

    def by_tokens(self) -> dict[str, dict]:
        return {b: self._stats([r for r in self.results if bucket_label(r.approx_tokens, self.token_edges) == b])
                for b in bucket_labels(self.token_edges)}

    def by_vars(self) -> dict[str, dict]:
        out = {}
        for b in bucket_labels(self.var_edges):
            rs = [r for r in self.results if bucket_label(r.size_vars, self.var_edges) == b]
            out[b] = dict(self._stats(rs), wmape=_wmape_or_none(rs))
        return out

    def consistency_violations(self) -> list[str]:
        """Runs proven structurally equal to the label whose values still differ."""
        return [f"{r.instance_id}#{r.repetition}" for r in self.results
                if r.em_verdict == MATCH and not r.matches(self.rel_tol, self.abs_tol)]

    def failures(self) -> list[RunResult]:
        return [r for r in self.results if r.status != OPTIMAL]

    def to_dict(self) -> dict:
        return {
            "repetitions": self.repetitions,
            "instances": self.instance_count,
            "runs": len(self.results),
            "tolerance": {"rule": "abs(value - label) <= max(abs, rel * abs(label))",
                          "rel": self.rel_tol, "abs": self.abs_tol},
            "overall": dict(self._stats(self.results), wmape=_wmape_or_none(self.results)),
            "by_type": self.by_type(),
            "by_input_tokens": self.by_tokens(),
            "by_variables": self.by_vars(),
            "failures": [{"instance": r.instance_id, "repetition": r.repetition, "status": r.status,
                          "error": r.error} for r in self.failures()],
            "consistency_violations": self.consistency_violations(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        def pct(x):
            return "-" if x is None else f"{round(100 * x, 1) + 0.0:.1f}%"

        lines = [f"{'Type':<10} {'N':>4} {'Modeling':>9} {'EM':>7} {'NotProven':>10}"]
        rows = list(self.by_type().items()) + [("Overall", self._stats(self.results))]
        for name, s in rows:
            lines.append(f"{name:<10} {s['n']:>4} {pct(s['modeling_accuracy']):>9} {pct(s['em_accuracy']):>7} "
                         f"{pct(s['not_proven']):>10}")
        lines += ["", f"{'Input tokens':<14} {'N':>4} {'Modeling':>9} {'EM':>7}"]
        for b, s in self.by_tokens().items():
            lines.append(f"{b:<14} {s['n']:>4} {pct(s['modeling_accuracy']):>9} {pct(s['em_accuracy']):>7}")
        lines += ["", f"{'Variables':<14} {'N':>4} {'Modeling':>9} {'EM':>7} {'WMAPE':>7}"]
        for b, s in self.by_vars().items():
            lines.append(f"{b:<14} {s['n']:>4} {pct(s['modeling_accuracy']):>9} {pct(s['em_accuracy']):>7} "
                         f"{pct(s['wmape']):>7}")
        lines += ["", f"repetitions: {self.repetitions}; value tolerance: max({self.abs_tol:g}, {self.rel_tol:g}*|label|)"]
        if self.failures():
            lines.append(f"failed runs: {len(self.failures())}")
        return "\n".join(lines) + "\n"

    def results_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=RESULT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.results:
            w.writerow(r.row(self.rel_tol, self.abs_tol))
        return buf.getvalue()

    def write(self, out_dir: str | os.PathLike, figures: bool = True, traces: bool = True) -> dict[str, Path]:
        """report.json, report.txt, results.csv, timing.csv, per-run traces and PNG figures."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"json": out / "report.json", "text": out / "report.txt", "csv": out / "results.csv",
                 "timing": out / "timing.csv"}
        paths["json"].write_text(self.to_json() + "\n", encoding="utf-8")
        paths["text"].write_text(self.to_text(), encoding="utf-8")
        paths["csv"].write_text(self.results_csv(), encoding="utf-8")
        paths["timing"].write_text("instance,repetition,wall_time\n" + "".join(
            f"{r.instance_id},{r.repetition},{r.wall_time:.6f}\n" for r in self.results), encoding="utf-8")
        if traces:
            for r in self.results:
                run_dir = out / "runs" / r.instance_id / f"rep{r.repetition}"
                run_dir.mkdir(parents=True, exist_ok=True)
                (run_dir / "traces.json").write_text(json.dumps(r.traces, indent=2, sort_keys=True) + "\n",
                                                     encoding="utf-8")
                if r.model is not None:
                    (run_dir / "model.lp").write_text(write_lp(r.model), encoding="utf-8")
        if figures:
            paths.update(render_figures(self, out))
        return paths


def render_figures(report: Report, out_dir: str | os.PathLike) -> dict[str, Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    paths = {}
    for key, title, groups in (("fig_tokens", "Accuracy by input size (approx. tokens)", report.by_tokens()),
                               ("fig_vars", "Accuracy by generated variable count", report.by_vars())):
        labels = list(groups)
        xs = range(len(labels))
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for off, metric, name in ((-0.2, "modeling_accuracy", "modeling"), (0.2, "em_accuracy", "exact match")):
            vals = [groups[b][metric] or 0.0 for b in labels]
            ax.bar([x + off for x in xs], vals, width=0.4, label=name)
        ax.set_xticks(list(xs))
        ax.set_xticklabels([f"{b}\nn={groups[b]['n']}" for b in labels], fontsize=8)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("accuracy")
        ax.set_title(title, fontsize=10)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out / f"{'accuracy_by_tokens' if key == 'fig_tokens' else 'accuracy_by_vars'}.png"
        fig.savefig(path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        paths[key] = path
    return paths


# --------------------------------------------------------------------------- running


BackendFactory = Callable[[BenchmarkInstance, int], Backend]


def scripted_backend(instance: BenchmarkInstance, repetition: int) -> Backend:
    """Replay the instance's stored transcript; every repetition gets a fresh copy."""
    if instance.transcript is None:
        raise FileNotFoundError(f"instance {instance.id!r} has no transcript")
    return ScriptedBackend.from_file(instance.transcript)


def em_verdict(model: LinearModel, label: LinearModel) -> str:
    try:
        same, _ = models_equivalent(model, label)
    except AmbiguityError:
        return NOT_PROVEN
    return MATCH if same else MISMATCH


def run_instance(pipeline: Pipeline, instance: BenchmarkInstance, repetition: int, backend: Backend,
                 label: Optional[LinearModel] = None) -> RunResult:
    """One pipeline pass plus grading; every failure becomes a row, nothing propagates."""
    start = time.perf_counter()
    label = label if label is not None else instance.label_model()
    res = RunResult(instance.id, instance.type.code, repetition, instance.label_optimal, instance.approx_tokens,
                    label.n_vars)
    try:
        out = pipeline.run(instance.query, instance.datasets, backend, instance.force_type)
        res.predicted_type, res.workflow = out.type.code, out.kind
        res.traces = out.to_dict()["traces"]
        res.model = out.model
        sol = solve(out.model)
        res.status = sol.status
        if sol.status == OPTIMAL:
            res.value = sol.objective
        res.em_verdict = em_verdict(out.model, label)
    except PipelineError as exc:
        res.error = str(exc)
        res.predicted_type, res.workflow = exc.result.type.code, exc.result.kind
        res.traces = exc.result.to_dict()["traces"]
    except Exception as exc:  # noqa: BLE001 - a run must never abort the benchmark
        res.error = f"{type(exc).__name__}: {exc}"
    res.wall_time = time.perf_counter() - start
    return res


def run_benchmark(pipeline: Pipeline, instances: Sequence[BenchmarkInstance], repetitions: int = 1,
                  backend_factory: BackendFactory = scripted_backend, workers: int = 1,
                  token_edges: Sequence[float] = TOKEN_EDGES, var_edges: Sequence[float] = VAR_EDGES,
                  rel_tol: float = REL_TOL, abs_tol: float = ABS_TOL) -> Report:
    """Run every instance ``repetitions`` times and collect a report.

    Runs may execute in a thread pool; rows are reassembled in (instance,
    repetition) order so the report does not depend on scheduling.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    labels: dict[str, Optional[LinearModel]] = {}
    for inst in instances:
        try:
            labels[inst.id] = inst.label_model()
        except Exception:  # noqa: BLE001 - reported on the run row instead
            labels[inst.id] = None

    def job(args) -> RunResult:
        inst, rep = args
        try:
            backend = backend_factory(inst, rep)
        except Exception as exc:  # noqa: BLE001
            lab = labels[inst.id]
            return RunResult(inst.id, inst.type.code, rep, inst.label_optimal, inst.approx_tokens,
                             lab.n_vars if lab else 0, error=f"backend: {exc}")
        if labels[inst.id] is None:
            return RunResult(inst.id, inst.type.code, rep, inst.label_optimal, inst.approx_tokens, 0,
                             error="label model does not load")
        return run_instance(pipeline, inst, rep, backend, labels[inst.id])

    jobs = [(inst, rep) for inst in instances for rep in range(repetitions)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, jobs))
    else:
        results = [job(j) for j in jobs]
    return Report(results, repetitions, tuple(token_edges), tuple(var_edges), rel_tol, abs_tol)


def load_results_csv(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
