"""Reaction-diffusion with two Stefan free boundaries in space-time periodic media."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ContractError,
    ConvergenceError,
    DomainError,
    ExpressionError,
    FreefrontError,
    SolverError,
)
from .model import MediumModel, eval_dfu0, eval_f, parse_coefficient, validate_hypotheses  # noqa: E402

__all__ = [
    "ContractError",
    "ConvergenceError",
    "DomainError",
    "ExpressionError",
    "FreefrontError",
    "MediumModel",
    "SolverError",
    "eval_dfu0",
    "eval_f",
    "parse_coefficient",
    "validate_hypotheses",
]
