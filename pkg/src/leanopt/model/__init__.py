"""Model representation, parsing, canonical comparison and LP files."""
from .canonical import AmbiguityError, CanonicalForm, canonicalize, models_equivalent
from .expr import GrammarError, LengthMismatchError, UnboundSymbolError
from .grammar import parse_model_grammar
from .ir import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    INTEGER,
    LE,
    MAXIMIZE,
    MINIMIZE,
    Constraint,
    Defect,
    LinearExpr,
    LinearModel,
    ModelError,
    Variable,
    ensure_valid,
    validate,
)
from .lpformat import LPParseError, read_lp, write_lp

__all__ = [
    "AmbiguityError", "CanonicalForm", "canonicalize", "models_equivalent",
    "GrammarError", "LengthMismatchError", "UnboundSymbolError", "parse_model_grammar",
    "BINARY", "CONTINUOUS", "EQ", "GE", "INTEGER", "LE", "MAXIMIZE", "MINIMIZE",
    "Constraint", "Defect", "LinearExpr", "LinearModel", "ModelError", "Variable",
    "ensure_valid", "validate", "LPParseError", "read_lp", "write_lp",
]
