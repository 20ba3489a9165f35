from .lasso import (
    ConvergenceError,
    DegenerateGridError,
    DegenerateGridWarning,
    LambdaGrid,
    PathFit,
    SeparationWarning,
    default_q,
    find_lambda_min,
    kkt_violation,
    lambda_max,
    lasso_path,
    lowdim_q,
    make_grid,
    path_kkt,
    select_by_information_criterion,
)
from .stepwise import StepwiseFit, normalized_abs, stepwise_reference

__all__ = [
    "ConvergenceError",
    "DegenerateGridError",
    "DegenerateGridWarning",
    "LambdaGrid",
    "PathFit",
    "SeparationWarning",
    "StepwiseFit",
    "default_q",
    "find_lambda_min",
    "kkt_violation",
    "lambda_max",
    "lasso_path",
    "lowdim_q",
    "make_grid",
    "normalized_abs",
    "path_kkt",
    "select_by_information_criterion",
    "stepwise_reference",
]
