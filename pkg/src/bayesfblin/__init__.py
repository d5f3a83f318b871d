"""Bayesian feedback linearisation with online GP / log-normal identification."""

from ._accel import backend
from .controller import ControllerConfig, ControllerState, Phase, PController, SPController, decide
from .dynamics import PendulumParams, PendulumPlant, integrate_hold, make_plant
from .errors import (
    BayesFBLinError,
    ConditioningError,
    DimensionError,
    IntegrationError,
    InvalidObservation,
    NumericalError,
    OptimizationError,
    WindowError,
)
from .gp import GPModel, TrainingPoint, optimize_hyperparameters
from .harness import ExperimentConfig, RunRecord, metrics, optimize_mode, report, run
from .kernels import KernelKind, KernelSpec
from .lognormal import LogNormalModel

__version__ = "0.1.0"

__all__ = [
    "BayesFBLinError", "ConditioningError", "ControllerConfig", "ControllerState", "DimensionError",
    "ExperimentConfig", "GPModel", "IntegrationError", "InvalidObservation", "KernelKind", "KernelSpec",
    "LogNormalModel", "NumericalError", "OptimizationError", "PController", "PendulumParams",
    "PendulumPlant", "Phase", "RunRecord", "SPController", "TrainingPoint", "WindowError", "backend",
    "decide", "integrate_hold", "make_plant", "metrics", "optimize_hyperparameters", "optimize_mode",
    "report", "run",
]
