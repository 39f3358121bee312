"""Implicit predictors for regularized data-driven predictive control."""
from .data import DataMatrix, TrajectoryData, build_data_matrix, build_from_independent, rank_diagnostics
from .errors import DimensionError, DpcError, NumericalError, PreconditionError
from .ocp import BoxSet, OcpSolution, OcpSpec, solve_dpc_regularized, solve_dpc_unregularized, solve_mpc
from .predictors import (
    PROJECTED_TWO_NORM,
    TWO_NORM,
    ImplicitPredictorModel,
    RegularizerSpec,
    build_implicit_model,
    fit_spc,
    implicit_predict,
    implicit_predict_constrained,
    mpc_predictor,
    regularizer_cost,
)
from .qp import BACKEND as QP_BACKEND
from .sim import LtiPlant, closed_loop, pe_input, simulate

__version__ = "0.1.0"

__all__ = [
    "DataMatrix",
    "TrajectoryData",
    "build_data_matrix",
    "build_from_independent",
    "rank_diagnostics",
    "DpcError",
    "PreconditionError",
    "DimensionError",
    "NumericalError",
    "BoxSet",
    "OcpSpec",
    "OcpSolution",
    "solve_mpc",
    "solve_dpc_unregularized",
    "solve_dpc_regularized",
    "TWO_NORM",
    "PROJECTED_TWO_NORM",
    "RegularizerSpec",
    "ImplicitPredictorModel",
    "build_implicit_model",
    "fit_spc",
    "implicit_predict",
    "implicit_predict_constrained",
    "mpc_predictor",
    "regularizer_cost",
    "QP_BACKEND",
    "LtiPlant",
    "simulate",
    "pe_input",
    "closed_loop",
]
