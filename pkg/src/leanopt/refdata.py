"""Reference and benchmark stores: manifests, loaders and label self-checks.

Layout of a store directory::

    manifest.json
    <entry id>/query.txt
    <entry id>/label.txt        (output grammar) or label.lp
    <entry id>/category.txt     (reference entries: data category g)
    <entry id>/data.txt         (reference entries: formatted relevant data f)
    <entry id>/*.csv
"""
from __future__ import annotations

import enum
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import LinearExpr, LinearModel, parse_model_grammar, read_lp
from .retrieval import CsvTable, read_csv
from .solver import OPTIMAL, solve, solve_milp


class ProblemType(str, enum.Enum):
    NRM = "Network Revenue Management"
    RA = "Resource Allocation"
    TP = "Transportation"
    FLP = "Facility Location Problem"
    AP = "Assignment Problem"
    SBLP = "Sales-Based Linear Programming"
    OTHERS = "Others"
    MIXTURE = "Mixture"

    @property
    def code(self) -> str:
        return "Others" if self is ProblemType.OTHERS else "Mixture" if self is ProblemType.MIXTURE else self.name

    @property
    def agnostic(self) -> bool:
        """Types without a tailored workflow."""
        return self in (ProblemType.OTHERS, ProblemType.MIXTURE)

    @classmethod
    def parse(cls, text: str) -> Optional["ProblemType"]:
        """Match a free-text label against the allowed list; None when it is not a member."""
        key = _norm_label(text)
        return _ALIASES.get(key)


def _norm_label(text: str) -> str:
    s = re.sub(r"[*_`\"'“”]", "", text).strip().lower()
    s = re.sub(r"[\s.;:!]+$", "", s)
    s = re.sub(r"^the problem type (?:of the content )?is\s+", "", s)
    s = re.sub(r"\s+", " ", s.replace("-", " "))
    s = re.sub(r"\s*\(([a-z]+)\)$", "", s)
    s = re.sub(r" problems?$", "", s)
    return s


_ALIASES: dict[str, ProblemType] = {}
for _t in ProblemType:
    _ALIASES[_norm_label(_t.value)] = _t
    _ALIASES[_t.code.lower()] = _t
_ALIASES.update({
    "transportation": ProblemType.TP,
    "facility location": ProblemType.FLP,
    "assignment": ProblemType.AP,
    "sales based lp": ProblemType.SBLP,
    "sales based linear program": ProblemType.SBLP,
    "other": ProblemType.OTHERS,
    "mixed": ProblemType.MIXTURE,
})

# Authoring target: type counts of the full 96-entry reference set.
REFERENCE_PROFILE = {"RA": 24, "Mixture": 24, "Others": 16, "FLP": 9, "AP": 8, "TP": 7, "NRM": 5, "SBLP": 3}

TOKENS_PER_CHAR = 0.25


def approx_tokens(text: str) -> int:
    """Token count proxy: characters divided by four, rounded up."""
    return math.ceil(len(text) * TOKENS_PER_CHAR)


class StoreError(ValueError):
    pass


REL_TOL = 1e-4
ABS_TOL = 1e-6


def value_matches(value: Optional[float], label: float, rel_tol: float = REL_TOL, abs_tol: float = ABS_TOL) -> bool:
    """Grading rule shared by validation and the harness."""
    if value is None or not math.isfinite(value):
        return False
    return abs(value - label) <= max(abs_tol, rel_tol * abs(label))


# --------------------------------------------------------------------------- reference entries


@dataclass(frozen=True)
class RefEntry:
    id: str
    q: str
    t: ProblemType
    g: str
    f: str
    m: str
    datasets: tuple[Path, ...] = ()

    def label_model(self) -> LinearModel:
        return parse_model_grammar(self.m, metadata={"id": self.id})


@dataclass
class RefStore:
    root: Optional[Path]
    entries: list[RefEntry]

    @property
    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.entries:
            out[e.t.code] = out.get(e.t.code, 0) + 1
        return out

    def of_type(self, t: ProblemType) -> list[RefEntry]:
        return [e for e in self.entries if e.t is t]

    def get(self, entry_id: str) -> RefEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise KeyError(entry_id)


def _read_manifest(directory: Path, kind: str) -> dict:
    path = directory / "manifest.json"
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise StoreError(f"no manifest.json in {directory}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise StoreError(f"unreadable manifest {path}: {exc}") from exc
    if not isinstance(data, dict) or data.get("kind") != kind:
        raise StoreError(f"{path} is not a {kind} manifest")
    return data


def _read_text(path: Path, entry_id: str) -> str:
    try:
        return path.read_text(encoding="utf-8").strip()
    except OSError as exc:
        raise StoreError(f"entry {entry_id!r}: cannot read {path.name}: {exc}") from exc


def _parse_type(value: str, entry_id: str) -> ProblemType:
    t = ProblemType.parse(str(value))
    if t is None:
        raise StoreError(f"entry {entry_id!r}: unknown problem type {value!r}")
    return t


def _entry_dir(directory: Path, item: dict) -> Path:
    return directory / item.get("dir", item["id"])


def load_refdata(directory: str | os.PathLike) -> RefStore:
    root = Path(directory)
    data = _read_manifest(root, "refdata")
    entries = []
    seen: set[str] = set()
    for item in data.get("entries", []):
        if "id" not in item:
            raise StoreError("manifest entry without an id")
        eid = item["id"]
        if eid in seen:
            raise StoreError(f"duplicate entry id {eid!r}")
        seen.add(eid)
        d = _entry_dir(root, item)
        t = _parse_type(item.get("type", ""), eid)
        datasets = tuple(d / name for name in item.get("datasets", []))
        for p in datasets:
            if not p.is_file():
                raise StoreError(f"entry {eid!r}: dataset {p.name} not found")
        entries.append(RefEntry(
            eid,
            _read_text(d / "query.txt", eid),
            t,
            _read_text(d / "category.txt", eid),
            _read_text(d / "data.txt", eid),
            _read_text(d / "label.txt", eid),
            datasets,
        ))
    store = RefStore(root, entries)
    declared = data.get("counts")
    if declared is not None and declared != store.counts:
        raise StoreError(f"manifest counts {declared} disagree with entries {store.counts}")
    return store


# --------------------------------------------------------------------------- benchmark instances


@dataclass(frozen=True)
class BenchmarkInstance:
    id: str
    query: str
    datasets: tuple[Path, ...]
    label_path: Path
    label_optimal: float
    type: ProblemType
    approx_tokens: int
    n_vars: Optional[int] = None
    transcript: Optional[Path] = None
    force_type: Optional[ProblemType] = None

    def label_model(self) -> LinearModel:
        text = self.label_path.read_text(encoding="utf-8")
        if self.label_path.suffix.lower() == ".lp":
            return read_lp(text)
        return parse_model_grammar(text, metadata={"id": self.id})

    def tables(self) -> list[CsvTable]:
        return [read_csv(p) for p in self.datasets]


def load_benchmark(directory: str | os.PathLike) -> list[BenchmarkInstance]:
    root = Path(directory)
    data = _read_manifest(root, "benchmark")
    out = []
    seen: set[str] = set()
    for item in data.get("instances", []):
        if "id" not in item:
            raise StoreError("manifest instance without an id")
        iid = item["id"]
        if iid in seen:
            raise StoreError(f"duplicate instance id {iid!r}")
        seen.add(iid)
        d = _entry_dir(root, item)
        query = _read_text(d / item.get("query", "query.txt"), iid)
        datasets = tuple(d / name for name in item.get("datasets", []))
        for p in datasets:
            if not p.is_file():
                raise StoreError(f"instance {iid!r}: dataset {p.name} not found")
        label = d / item.get("label", "label.txt")
        if not label.is_file():
            raise StoreError(f"instance {iid!r}: label {label.name} not found")
        transcript = d / item["transcript"] if item.get("transcript") else None
        if transcript is not None and not transcript.is_file():
            raise StoreError(f"instance {iid!r}: transcript {transcript.name} not found")
        try:
            optimal = float(item["optimal"])
        except (KeyError, TypeError, ValueError):
            raise StoreError(f"instance {iid!r}: missing or invalid optimal value") from None
        size_text = query + "".join(p.read_text(encoding="utf-8") for p in datasets)
        out.append(BenchmarkInstance(
            iid, query, datasets, label, optimal,
            _parse_type(item.get("type", ""), iid),
            int(item.get("approx_tokens", approx_tokens(size_text))),
            item.get("n_vars"),
            transcript,
            _parse_type(item["force_type"], iid) if item.get("force_type") else None,
        ))
    return out


@dataclass
class ValidationReport:
    id: str
    status: str
    value: Optional[float]
    label_value: float
    value_match: bool
    unique: Optional[bool]
    n_vars: int
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.value_match


def _perturbed(model: LinearModel, rng: np.random.Generator, scale: float) -> LinearModel:
    coefs = model.objective.as_dict()
    terms = tuple((coefs.get(n, 0.0) + scale * float(rng.uniform(-1.0, 1.0)), n) for n in model.var_names())
    return LinearModel(model.sense, LinearExpr(terms, model.objective.constant), model.variables,
                       model.constraints, dict(model.metadata))


def check_unique_optimum(model: LinearModel, optimum: Optional[dict] = None, trials: int = 3,
                         seed: int = 0) -> tuple[bool, list[dict]]:
    """Look for a second optimal vertex by re-solving with tiny objective perturbations.

    Returns (unique, distinct optimal points found).
    """
    base = solve(model)
    if base.status != OPTIMAL:
        return True, []
    points = [optimum or base.values]
    rng = np.random.default_rng(seed)
    cmax = max([abs(a) for a, _ in model.objective.terms] + [1.0])
    integral = any(v.is_integral for v in model.variables)
    budget = max(200, 4 * base.nodes)
    for _ in range(trials):
        perturbed = _perturbed(model, rng, 1e-6 * cmax)
        # a trial that runs out of nodes is inconclusive, not evidence either way
        sol = solve_milp(perturbed, node_limit=budget, raise_on_limit=False) if integral else solve(perturbed)
        if sol.status != OPTIMAL:
            continue
        value = model.objective.evaluate(sol.values)
        if not value_matches(value, base.objective):
            continue
        if all(max(abs(sol.values[n] - p[n]) for n in model.var_names()) > 1e-6 for p in points):
            points.append(sol.values)
    return len(points) == 1, points


def validate_instance(instance: BenchmarkInstance, check_uniqueness: bool = True,
                      trials: int = 3, seed: int = 0) -> ValidationReport:
    """Solve the label model and compare it with the stored optimal value."""
    model = instance.label_model()
    sol = solve(model)
    value = sol.objective if sol.status == OPTIMAL else None
    match = value_matches(value, instance.label_optimal)
    msgs = []
    if sol.status != OPTIMAL:
        msgs.append(f"label model status {sol.status}")
    elif not match:
        msgs.append(f"label solves to {value:.10g}, stored optimal is {instance.label_optimal:.10g}")
    unique = None
    if check_uniqueness and sol.status == OPTIMAL:
        unique, _ = check_unique_optimum(model, sol.values, trials, seed)
        if not unique:
            msgs.append("multiple optimal solutions suspected")
    return ValidationReport(instance.id, sol.status, value, instance.label_optimal, match, unique,
                            model.n_vars, msgs)
