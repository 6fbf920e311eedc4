"""Parse agent output of the form "abstract model + retrieved information".

Layout (section headers are matched exactly, optionally wrapped in ``**``)::

    Objective Function:
    $\\max \\sum_i A_i \\cdot x_i$

    Constraints:
    1. Inventory Constraints:
    $x_i \\leq I_i, \\quad \\forall i$
    2. Variable Constraints:
    $x_i \\in \\mathbb{Z}_+, \\quad \\forall i$

    Retrieved Information:
    $I = [97, 240, 322, 281]$
    $i \\in \\{1, \\dots, 4\\}$      (optional explicit index set)
"""
from __future__ import annotations

import math
import re
from typing import Mapping, Optional

from .expr import (
    Add,
    Expander,
    Num,
    Ref,
    GrammarError,
    LengthMismatchError,
    Statement,
    UnboundSymbolError,
    clean,
    parse_objective,
    parse_statement,
    tokenize,
    _Parser,
)
from .ir import BINARY, CONTINUOUS, GE, LE, Constraint, LinearExpr, LinearModel, Variable, ensure_valid

__all__ = [
    "GrammarError",
    "UnboundSymbolError",
    "LengthMismatchError",
    "parse_model_grammar",
    "split_sections",
    "build_model",
]

OBJECTIVE_HEADER = "Objective Function:"
CONSTRAINTS_HEADER = "Constraints:"
RETRIEVED_HEADER = "Retrieved Information:"
_HEADERS = (OBJECTIVE_HEADER, CONSTRAINTS_HEADER, RETRIEVED_HEADER)

_MATH = re.compile(r"\$\$(.+?)\$\$|\$(.+?)\$|\\\[(.+?)\\\]", re.DOTALL)
_TITLE = re.compile(r"^\s*(?:\d+[.)]|[-*])?\s*\**\s*([A-Za-z][^$:]*?)\s*\**\s*:\s*\**\s*$")
_ENV = re.compile(r"\\begin\{(?:align\*?|aligned|equation\*?|gather\*?|array)\}(?:\{[^}]*\})?|\\end\{(?:align\*?|aligned|equation\*?|gather\*?|array)\}")


def _strip_header_line(line: str) -> str:
    s = line.strip()
    s = re.sub(r"^\s*#+\s*", "", s)
    s = re.sub(r"\\textbf\{([^}]*)\}", r"\1", s)
    return s.replace("**", "").replace("__", "").strip()


def split_sections(text: str) -> dict[str, str]:
    sections: dict[str, list[str]] = {}
    current: Optional[str] = None
    for line in text.splitlines():
        stripped = _strip_header_line(line)
        hit = next((h for h in _HEADERS if stripped.startswith(h)), None)
        if hit is not None:
            current = hit
            sections.setdefault(hit, [])
            rest = stripped[len(hit):].strip()
            if rest:
                sections[hit].append(rest)
            continue
        if current is not None:
            sections[current].append(line)
    return {k: "\n".join(v) for k, v in sections.items()}


def _math_chunks(line: str) -> list[str]:
    found = [next(g for g in m.groups() if g is not None) for m in _MATH.finditer(line)]
    return found


def _statements_from_block(block: str) -> list[tuple[str, str]]:
    """Yield (title, math statement) pairs from a constraints-style block."""
    out: list[tuple[str, str]] = []
    title = ""
    # math may span several lines: join $$...$$ and environments first
    block = _ENV.sub(" ", block)
    pieces: list[tuple[str, bool]] = []  # (text, is_math)
    pos = 0
    for m in _MATH.finditer(block):
        pieces.append((block[pos:m.start()], False))
        pieces.append((next(g for g in m.groups() if g is not None), True))
        pos = m.end()
    pieces.append((block[pos:], False))
    for text, is_math in pieces:
        if is_math:
            for part in re.split(r"\\\\", text):
                if part.strip():
                    out.append((title, part.strip()))
            continue
        for line in text.splitlines():
            s = line.strip()
            if not s:
                continue
            m = _TITLE.match(s)
            if m:
                title = m.group(1).strip()
                continue
            if re.search(r"<=|>=|≤|≥|\\le|\\ge|=|\\in", s) and not re.match(r"^[A-Za-z ,'()-]+\.$", s):
                # bare math line
                for part in re.split(r"\\\\", s):
                    if part.strip():
                        out.append((title, part.strip()))
    return out


def _parse_number(s: str) -> float:
    return float(s.strip().replace("_", ""))


def _parse_array(src: str):
    src = src.strip()
    if src.startswith("["):
        import json

        try:
            return json.loads(src)
        except ValueError:
            body = src.strip("[]")
            return [_parse_number(x) for x in body.split(",") if x.strip()]
    return _parse_number(src)


_ASSIGN = re.compile(r"^\s*([A-Za-z][A-Za-z0-9]*)\s*=\s*(\[.*\]|[-+]?\d[\d.eE+-]*)\s*[.,;]?\s*$", re.DOTALL)
_SET_DECL = re.compile(r"([A-Za-z][A-Za-z0-9]*)\s*(\\in|=)\s*(\\\{.*?\\\})")


def parse_retrieved(block: str) -> tuple[dict, dict[str, list[int]], dict[str, list[int]]]:
    """Return (params, index sets by letter, named sets)."""
    params: dict = {}
    sets: dict[str, list[int]] = {}
    named: dict[str, list[int]] = {}
    block = _ENV.sub(" ", block)
    candidates: list[str] = []
    for line in block.splitlines():
        chunks = _math_chunks(line)
        candidates.extend(chunks if chunks else [line])
    expanded: list[str] = []
    for c in candidates:
        expanded.extend(p for p in re.split(r"\\\\", c) if p.strip())
    for raw in expanded:
        s = clean(raw)
        if not s:
            continue
        for m in _SET_DECL.finditer(s):
            name, kind, body = m.groups()
            p = _Parser(tokenize(body), body)
            values = p.explicit_set()
            if kind == r"\in" and len(name) == 1 and name.islower():
                sets[name] = values
            else:
                named[name] = values
        if _SET_DECL.search(s):
            continue
        s2 = re.sub(r"(?<=\d),(?=\d{3}\b)", "", s)  # thousands separators in scalars only
        m = _ASSIGN.match(s2 if not s.strip().split("=", 1)[-1].strip().startswith("[") else s)
        if m:
            params[m.group(1)] = _parse_array(m.group(2))
    return params, sets, named


def build_model(
    sense: str,
    objective: Statement,
    statements: list[Statement],
    expander: Expander,
    var_kinds: Optional[Mapping[str, tuple[str, float, float]]] = None,
    metadata: Optional[Mapping[str, str]] = None,
) -> LinearModel:
    """Expand parsed statements into a validated LinearModel."""
    all_exprs = [objective] + [s for s in statements if s.kind == "constraint"]
    expander.infer_sets(all_exprs)
    domains: dict[str, tuple[str, float, float]] = {}
    # symbol-level defaults, e.g. from a plan's variable list
    sym_domain = dict(var_kinds or {})

    obj_coefs, obj_const = expander.evaluate(objective.lhs, {})
    rows: list[Constraint] = []
    used_names: dict[str, int] = {}
    lower_zero: set[str] = set()
    counter = 0
    for st in statements:
        if st.kind == "domain":
            for env in expander.bindings(st.foralls):
                for ref in st.refs:
                    if expander.param_value(ref) is not None:
                        raise GrammarError(f"domain declared for parameter {ref.name!r}")
                    name = expander.var_name(ref, env)
                    expander._note_var(name)
                    domains[name] = st.domain
            continue
        base = re.sub(r"[^a-z0-9]+", "_", st.title.lower()).strip("_") or "c"
        for env in expander.bindings(st.foralls):
            lc, lk = expander.evaluate(st.lhs, env)
            rc, rk = expander.evaluate(st.rhs, env)
            coefs = dict(lc)
            for v, a in rc.items():
                coefs[v] = coefs.get(v, 0.0) - a
            coefs = {v: a for v, a in coefs.items() if a != 0.0}
            rhs = rk - lk
            if not coefs:
                ok = (rhs >= -1e-9) if st.op == "<=" else (rhs <= 1e-9) if st.op == ">=" else abs(rhs) <= 1e-9
                if not ok:
                    raise GrammarError(f"constant constraint is infeasible: {st.source!r}")
                continue
            # x >= 0 restates the default domain
            if st.op == ">=" and len(coefs) == 1 and rhs == 0.0 and next(iter(coefs.values())) > 0:
                lower_zero.add(next(iter(coefs)))
                continue
            counter += 1
            suffix = "_".join(str(env[s.symbol]) for s in st.foralls)
            cname = f"{base}_{suffix}" if suffix else base
            if cname in used_names:
                used_names[cname] += 1
                cname = f"{cname}_{used_names[cname]}"
            else:
                used_names[cname] = 0
            sense_ = {"<=": LE, ">=": GE, "=": "="}[st.op]
            rows.append(Constraint(cname, LinearExpr(tuple((a, v) for v, a in coefs.items())), sense_, rhs))

    variables = []
    for name in expander.var_order:
        symbol = name.split("_", 1)[0]
        kind, lo, hi = domains.get(name) or sym_domain.get(symbol) or (CONTINUOUS, 0.0, math.inf)
        if name in lower_zero and lo < 0:
            lo = 0.0
        variables.append(Variable(name, lo, hi, kind))
    model = LinearModel(
        sense,
        LinearExpr(tuple((a, v) for v, a in obj_coefs.items() if a != 0.0), obj_const),
        tuple(variables),
        tuple(rows),
        dict(metadata or {}),
    )
    ensure_valid(model)
    return model


def _nonneg_symbol(st: Statement) -> Optional[str]:
    """Symbol of a ``x_i >= 0`` statement, which declares ``x`` as a variable."""
    if st.kind != "constraint" or st.op != ">=":
        return None
    lhs, rhs = st.lhs, st.rhs
    if not (isinstance(lhs, Add) and len(lhs.terms) == 1 and lhs.terms[0][0] == 1):
        return None
    if not (isinstance(rhs, Add) and len(rhs.terms) == 1 and isinstance(rhs.terms[0][1], Num)):
        return None
    ref = lhs.terms[0][1]
    if isinstance(ref, Ref) and ref.column is None and rhs.terms[0][1].value == 0:
        return ref.name
    return None


def parse_model_grammar(
    text: str,
    retrieved: Optional[Mapping[str, object]] = None,
    metadata: Optional[Mapping[str, str]] = None,
) -> LinearModel:
    """Bind the abstract model in ``text`` to its retrieved arrays and expand it.

    ``retrieved`` supplies or overrides arrays/scalars by symbol name.
    """
    sections = split_sections(text)
    for h in (OBJECTIVE_HEADER, CONSTRAINTS_HEADER):
        if h not in sections:
            raise GrammarError(f"missing section {h!r}")
    params, sets, named = parse_retrieved(sections.get(RETRIEVED_HEADER, ""))
    if retrieved:
        params.update(dict(retrieved))

    obj_src = [s for s in (_math_chunks(sections[OBJECTIVE_HEADER]) or sections[OBJECTIVE_HEADER].splitlines()) if s.strip()]
    obj_src = [re.split(r"\\\\", _ENV.sub(" ", s)) for s in obj_src]
    flat = [p.strip() for group in obj_src for p in group if p.strip()]
    if not flat:
        raise GrammarError("empty objective")
    objective = parse_objective(" ".join(flat))

    statements = [parse_statement(src, title) for title, src in _statements_from_block(sections[CONSTRAINTS_HEADER])]
    declared = {r.name for st in statements if st.kind == "domain" for r in st.refs}
    declared |= {n for st in statements if (n := _nonneg_symbol(st))}
    expander = Expander(params, sets, named, declared_vars=declared or None)
    return build_model(objective.sense, objective, statements, expander, metadata=metadata)
