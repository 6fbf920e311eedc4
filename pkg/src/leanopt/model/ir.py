"""Linear / mixed-integer model representation shared by every stage."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

CONTINUOUS = "continuous"
INTEGER = "integer"
BINARY = "binary"
KINDS = (CONTINUOUS, INTEGER, BINARY)

LE, GE, EQ = "<=", ">=", "="
SENSES = (LE, GE, EQ)

MAXIMIZE = "maximize"
MINIMIZE = "minimize"


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float = 0.0
    upper: float = math.inf
    kind: str = CONTINUOUS

    @property
    def is_integral(self) -> bool:
        return self.kind in (INTEGER, BINARY)


@dataclass(frozen=True)
class LinearExpr:
    """Sum of ``coef * var`` terms plus a constant."""

    terms: tuple[tuple[float, str], ...] = ()
    constant: float = 0.0

    @classmethod
    def from_dict(cls, coefs: Mapping[str, float], constant: float = 0.0) -> "LinearExpr":
        return cls(tuple((float(c), v) for v, c in coefs.items()), float(constant))

    def as_dict(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for coef, var in self.terms:
            out[var] = out.get(var, 0.0) + coef
        return out

    def normalized(self) -> "LinearExpr":
        """Merge repeated variables and drop zero coefficients, keeping first-seen order."""
        merged = self.as_dict()
        return LinearExpr(tuple((c, v) for v, c in merged.items() if c != 0.0), self.constant)

    def variables(self) -> list[str]:
        return [v for _, v in self.terms]

    def evaluate(self, values: Mapping[str, float]) -> float:
        return self.constant + sum(c * values[v] for c, v in self.terms)


@dataclass(frozen=True)
class Constraint:
    name: str
    expr: LinearExpr
    sense: str
    rhs: float

    def violation(self, values: Mapping[str, float]) -> float:
        lhs = self.expr.evaluate(values)
        if self.sense == LE:
            return max(0.0, lhs - self.rhs)
        if self.sense == GE:
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass(frozen=True)
class LinearModel:
    sense: str
    objective: LinearExpr
    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...] = ()
    metadata: Mapping[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        # accept lists from callers; store tuples so instances stay hashable-ish and immutable
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def var_names(self) -> list[str]:
        return [v.name for v in self.variables]

    def with_bounds(self, bounds: Mapping[str, tuple[float, float]]) -> "LinearModel":
        """Copy of the model with some variable bounds replaced."""
        new_vars = []
        for v in self.variables:
            if v.name in bounds:
                lo, hi = bounds[v.name]
                v = Variable(v.name, lo, hi, v.kind)
            new_vars.append(v)
        return LinearModel(self.sense, self.objective, tuple(new_vars), self.constraints, dict(self.metadata))

    def relaxed(self) -> "LinearModel":
        new_vars = tuple(Variable(v.name, v.lower, v.upper, CONTINUOUS) for v in self.variables)
        return LinearModel(self.sense, self.objective, new_vars, self.constraints, dict(self.metadata))

    def renamed(self, mapping: Mapping[str, str]) -> "LinearModel":
        def ren(e: LinearExpr) -> LinearExpr:
            return LinearExpr(tuple((c, mapping.get(v, v)) for c, v in e.terms), e.constant)

        return LinearModel(
            self.sense,
            ren(self.objective),
            tuple(Variable(mapping.get(v.name, v.name), v.lower, v.upper, v.kind) for v in self.variables),
            tuple(Constraint(c.name, ren(c.expr), c.sense, c.rhs) for c in self.constraints),
            dict(self.metadata),
        )

    def max_violation(self, values: Mapping[str, float]) -> float:
        worst = 0.0
        for c in self.constraints:
            worst = max(worst, c.violation(values))
        for v in self.variables:
            x = values[v.name]
            worst = max(worst, v.lower - x, x - v.upper)
            if v.is_integral:
                worst = max(worst, abs(x - round(x)))
        return worst


@dataclass(frozen=True)
class Defect:
    code: str
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} at {self.where}: {self.message}"


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def _check_expr(expr: LinearExpr, where: str, declared: set[str], out: list[Defect]) -> None:
    seen: set[str] = set()
    for coef, var in expr.terms:
        if not _finite(coef):
            out.append(Defect("non-finite-coefficient", where, f"coefficient {coef!r} on {var}"))
        if var not in declared:
            out.append(Defect("undeclared-variable", where, f"variable {var!r} is not declared"))
        if var in seen:
            out.append(Defect("duplicate-term", where, f"variable {var!r} appears more than once"))
        seen.add(var)
    if not _finite(expr.constant):
        out.append(Defect("non-finite-coefficient", where, f"constant {expr.constant!r}"))


def validate(model: LinearModel) -> list[Defect]:
    """Return every invariant violation in ``model``; empty means well-formed."""
    out: list[Defect] = []
    if model.sense not in (MAXIMIZE, MINIMIZE):
        out.append(Defect("bad-sense", "objective", f"unknown objective sense {model.sense!r}"))
    names: set[str] = set()
    for v in model.variables:
        where = f"variable {v.name}"
        if not v.name:
            out.append(Defect("bad-name", where, "empty variable name"))
        if v.name in names:
            out.append(Defect("duplicate-variable", where, "name declared twice"))
        names.add(v.name)
        if v.kind not in KINDS:
            out.append(Defect("bad-kind", where, f"unknown kind {v.kind!r}"))
        if math.isnan(v.lower) or math.isnan(v.upper) or v.lower == math.inf or v.upper == -math.inf:
            out.append(Defect("bad-bounds", where, f"invalid bounds [{v.lower}, {v.upper}]"))
        elif v.lower > v.upper:
            out.append(Defect("bad-bounds", where, f"lower {v.lower} > upper {v.upper}"))
        if v.kind == BINARY and (v.lower < 0 or v.upper > 1):
            out.append(Defect("bad-bounds", where, f"binary bounds [{v.lower}, {v.upper}] outside [0, 1]"))
    _check_expr(model.objective, "objective", names, out)
    cnames: set[str] = set()
    for c in model.constraints:
        where = f"constraint {c.name}"
        if c.name in cnames:
            out.append(Defect("duplicate-constraint", where, "name used twice"))
        cnames.add(c.name)
        if c.sense not in SENSES:
            out.append(Defect("bad-sense", where, f"unknown sense {c.sense!r}"))
        if not _finite(c.rhs):
            out.append(Defect("non-finite-rhs", where, f"rhs {c.rhs!r}"))
        if not c.expr.terms:
            out.append(Defect("empty-constraint", where, "no terms"))
        _check_expr(c.expr, where, names, out)
    return out


class ModelError(ValueError):
    """Raised when an operation requires a valid model and gets an invalid one."""

    def __init__(self, defects: Iterable[Defect]):
        self.defects = list(defects)
        super().__init__("; ".join(str(d) for d in self.defects))


def ensure_valid(model: LinearModel) -> None:
    defects = validate(model)
    if defects:
        raise ModelError(defects)
