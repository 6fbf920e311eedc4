"""Embedded LP simplex, MILP branch-and-bound and brute-force oracle."""
from .brute import EnumerationLimitError, brute_force
from .milp import NodeLimitError, solve_milp
from .simplex import (
    GAP_LIMIT,
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    NumericalInstabilityError,
    Solution,
    solve_lp,
)


def solve(model):
    """Solve with branch-and-bound when any variable is integral, else simplex."""
    if any(v.is_integral for v in model.variables):
        return solve_milp(model)
    return solve_lp(model)


__all__ = [
    "EnumerationLimitError", "brute_force", "NodeLimitError", "solve_milp",
    "GAP_LIMIT", "INFEASIBLE", "OPTIMAL", "UNBOUNDED", "NumericalInstabilityError",
    "Solution", "solve_lp", "solve",
]
