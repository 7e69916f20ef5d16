"""Trading off cumulative reward against estimation error in multi-armed bandits."""

from .arms import ArmModel, BanditInstance, Family, RngStream, make_instance, sample
from .objective import (
    ConcavityConstants,
    Moments,
    TradeoffParams,
    concavity_constants,
    eval_epsilon,
    eval_f,
    eval_rho,
    grad_f,
)
from .solver import SolveReport, brute_force_allocation, pareto_point, solve_allocation

__version__ = "0.1.0"

__all__ = [
    "ArmModel",
    "BanditInstance",
    "ConcavityConstants",
    "Family",
    "Moments",
    "RngStream",
    "SolveReport",
    "TradeoffParams",
    "brute_force_allocation",
    "concavity_constants",
    "eval_epsilon",
    "eval_f",
    "eval_rho",
    "grad_f",
    "make_instance",
    "pareto_point",
    "sample",
    "solve_allocation",
]
