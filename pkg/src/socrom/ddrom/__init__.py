"""Non-intrusive, L2-optimal, parameter-separable reduced models.

Only ``(mu, y)`` samples and an initial set of DDROM matrices enter this
subpackage; it never imports the finite element or full-order modules.
"""

from .estimator import DdromRegressor
from .model import (
    DdromMatrices,
    DenseParametrization,
    InfeasibleDdromError,
    StructuredParametrization,
    TrainingSet,
    ddrom_solve,
    dual_solve,
    evaluate,
    feasibility_margin,
    gradients,
    objective,
    parametrization_for,
    predict,
)
from .optimize import FitReport, LineSearchError, fit, strong_wolfe
from .serialize import load_ddrom, save_ddrom

__all__ = [
    "DdromMatrices", "DdromRegressor", "DenseParametrization", "FitReport",
    "InfeasibleDdromError", "LineSearchError", "StructuredParametrization", "TrainingSet",
    "ddrom_solve", "dual_solve", "evaluate", "feasibility_margin", "fit", "gradients",
    "load_ddrom", "objective", "parametrization_for", "predict", "save_ddrom", "strong_wolfe",
]
