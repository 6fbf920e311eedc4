"""Compile an Abstract Model Plan into a LinearModel.

The plan names CSV columns (``schema[Price][i]``); numbers are read from the
datasets by :class:`SchemaReader`, never transcribed by the language model.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..model import BINARY, CONTINUOUS, INTEGER, GrammarError, LinearModel
from ..model.expr import Expander, parse_objective, parse_statement
from ..model.grammar import _ENV, _math_chunks, _nonneg_symbol, build_model, parse_retrieved
from ..retrieval import CsvTable

PLAN_STEPS = (
    "Analyze Query",
    "Identify Model Type",
    "Define Index Sets",
    "Define Decision Variables",
    "Identify Parameters",
    "Formulate Objective",
    "Formulate Constraints",
)
PLAN_START = "------------Abstract Model Plan Start------------"
PLAN_END = "------------Abstract Model Plan End------------"

_STEP = re.compile(
    r"^[ \t]*(?:\*\*)?[ \t]*([1-7])\.[ \t]*(?:\*\*)?[ \t]*(" + "|".join(PLAN_STEPS) + r")\b[^\n]*?:?",
    re.MULTILINE | re.IGNORECASE,
)
_VAR = re.compile(r"`?\\?(?:texttt\{)?([A-Za-z][A-Za-z0-9]*)\s*\[[^\]]*\]")
_VTYPE = re.compile(r"(?:GRB\.)?\b(CONTINUOUS|INTEGER|BINARY)\b", re.IGNORECASE)
_KINDS = {"CONTINUOUS": (CONTINUOUS, 0.0, math.inf), "INTEGER": (INTEGER, 0.0, math.inf),
          "BINARY": (BINARY, 0.0, 1.0)}


class PlanError(GrammarError):
    pass


@dataclass
class AbstractPlan:
    text: str
    steps: dict[str, str]
    model_type: str
    var_kinds: dict[str, tuple[str, float, float]] = field(default_factory=dict)
    columns: list[str] = field(default_factory=list)


def extract_plan(answer: str) -> str:
    """Text between the plan markers, or the answer itself when they are absent."""
    start = answer.find(PLAN_START)
    if start >= 0:
        end = answer.find(PLAN_END, start)
        return answer[start + len(PLAN_START): end if end >= 0 else len(answer)].strip()
    m = re.search(r"^[ \t]*Final Answer[ \t]*:", answer, re.MULTILINE)
    return answer[m.end():].strip() if m else answer.strip()


def parse_plan(text: str) -> AbstractPlan:
    body = extract_plan(text)
    found = list(_STEP.finditer(body))
    steps: dict[str, str] = {}
    for k, m in enumerate(found):
        end = found[k + 1].start() if k + 1 < len(found) else len(body)
        name = next(s for s in PLAN_STEPS if s.lower() == m.group(2).lower())
        steps.setdefault(name, body[m.end():end].strip())
    missing = [s for s in PLAN_STEPS if s not in steps]
    if missing:
        raise PlanError(f"plan is missing step(s): {', '.join(missing)}")
    var_kinds: dict[str, tuple[str, float, float]] = {}
    for line in steps["Define Decision Variables"].splitlines():
        vm = _VAR.search(line)
        if not vm:
            continue
        tm = _VTYPE.search(line[vm.end():])
        kind = _KINDS[tm.group(1).upper()] if tm else _KINDS["CONTINUOUS"]
        var_kinds.setdefault(vm.group(1), kind)
    if not var_kinds:
        raise PlanError("plan declares no decision variables")
    columns = re.findall(r"`([^`]+)`", steps["Identify Parameters"])
    model_type = steps["Identify Model Type"].splitlines()[0].strip() if steps["Identify Model Type"] else ""
    return AbstractPlan(body, steps, model_type, var_kinds, columns)


# --------------------------------------------------------------------------- column readers


def _compact(s: str) -> str:
    return re.sub(r"[^a-z0-9]", "", s.lower())


def _number(cell: str, where: str) -> float:
    try:
        return float(cell.replace(",", ""))
    except ValueError:
        raise PlanError(f"{where}: {cell!r} is not a number") from None


class SchemaReader:
    """Resolve ``schema[...]`` names against CSV tables.

    ``Column`` searches every table, ``file.csv:Column`` one table, and a bare
    table name returns that table's numeric block as a matrix. Blank cells are
    skipped, so a short column may share a file with longer ones.
    """

    def __init__(self, tables: Sequence[CsvTable]):
        self.tables = list(tables)

    def _table(self, name: str) -> Optional[CsvTable]:
        key = _compact(re.sub(r"\.csv$", "", name.strip(), flags=re.IGNORECASE))
        for t in self.tables:
            if _compact(re.sub(r"\.csv$", "", t.name, flags=re.IGNORECASE)) == key:
                return t
        return None

    def _column(self, table: CsvTable, col: str) -> Optional[int]:
        for exact in (True, False):
            for k, h in enumerate(table.header):
                if (h == col) if exact else (_compact(h) == _compact(col)):
                    return k
        return None

    def __call__(self, name: str):
        if ":" in name:
            tname, col = name.split(":", 1)
            table = self._table(tname)
            if table is None:
                raise PlanError(f"no dataset named {tname!r}")
            hits = [(table, self._column(table, col))] if self._column(table, col) is not None else []
        else:
            hits = [(t, k) for t in self.tables if (k := self._column(t, name)) is not None]
            if not hits:
                table = self._table(name)
                if table is not None:
                    return self.matrix(table)
        if not hits:
            raise PlanError(f"no CSV column named {name!r}")
        if len(hits) > 1:
            raise PlanError(f"column {name!r} appears in several files; write file.csv:{name}")
        table, k = hits[0]
        return [_number(r[k], f"{table.name}:{table.header[k]}") for r in table.rows if r[k].strip()]

    def matrix(self, table: CsvTable) -> list[list[float]]:
        start = 0 if table.rows and all(_is_num(c) for c in (r[0] for r in table.rows)) else 1
        return [[_number(c, table.name) for c in r[start:]] for r in table.rows]


def _is_num(s: str) -> bool:
    try:
        float(s.replace(",", ""))
        return True
    except ValueError:
        return False


# --------------------------------------------------------------------------- compilation


def _formulas(block: str) -> list[tuple[str, str]]:
    """(title, formula) pairs from a bullet list of named constraints."""
    out = []
    title = ""
    for line in block.splitlines():
        chunks = _math_chunks(line)
        lead = line.split("$", 1)[0] if "$" in line else line
        lead = re.sub(r"\*\*|\\textbf|^\s*[-*•]|\bConstraint\s+\d+\b|\\item", " ", lead)
        lead = re.sub(r"\s+", " ", lead).strip(" :.-")
        if lead:
            title = lead
        for c in chunks:
            for part in re.split(r"\\\\", _ENV.sub(" ", c)):
                if part.strip():
                    out.append((title, part.strip()))
    return out


def compile_plan(plan: AbstractPlan | str, tables: Sequence[CsvTable], metadata=None) -> LinearModel:
    if isinstance(plan, str):
        plan = parse_plan(plan)
    params, sets, named = {}, {}, {}
    for step in ("Define Index Sets", "Identify Parameters"):
        p, s, n = parse_retrieved(plan.steps[step])
        params.update(p)
        sets.update(s)
        named.update(n)
    obj_chunks = [c for c in _math_chunks(plan.steps["Formulate Objective"]) if c.strip()]
    if not obj_chunks:
        raise PlanError("objective step has no formula")
    objective = parse_objective(" ".join(obj_chunks))
    statements = [parse_statement(src, title) for title, src in _formulas(plan.steps["Formulate Constraints"])]
    declared = set(plan.var_kinds)
    declared |= {r.name for st in statements if st.kind == "domain" for r in st.refs}
    declared |= {n for st in statements if (n := _nonneg_symbol(st))}
    expander = Expander(params, sets, named, schema=SchemaReader(tables), declared_vars=declared)
    meta = {"plan_model_type": plan.model_type}
    meta.update(metadata or {})
    return build_model(objective.sense, objective, statements, expander, var_kinds=plan.var_kinds, metadata=meta)
