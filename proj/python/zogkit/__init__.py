"""Zeroth-order gradient estimation and black-box attacks."""

from ._zogkit import (
    BudgetExhausted,
    Model,
    ModelFormatError,
    Server,
    TransportError,
    attack,
    estimate_gradient,
    gen_model,
    run_experiment,
)

__all__ = [
    "BudgetExhausted",
    "Model",
    "ModelFormatError",
    "Server",
    "TransportError",
    "attack",
    "estimate_gradient",
    "gen_model",
    "run_experiment",
]
