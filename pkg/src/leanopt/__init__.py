"""Auto-formulation of linear and mixed-integer models from queries and CSV data."""

__version__ = "0.1.0"
