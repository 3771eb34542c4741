"""Problem generators and evaluators for the shipped experiments."""
from .catalog import gen_quadratic
from .regression import gen_regression

__all__ = ["gen_quadratic", "gen_regression"]
