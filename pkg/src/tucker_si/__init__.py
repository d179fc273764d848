"""Riemannian CG tensor completion with side information on the Tucker quotient manifold.

Modes are 0-based throughout. The main entry points are :class:`ProblemData`,
:func:`solve_rcg` and the synthetic generators in :mod:`tucker_si.synth`.
"""

from .geometry import (
    AmbientVector,
    FeatureBasis,
    MetricContext,
    SolveError,
    TuckerPoint,
    metric_inner,
    project_horizontal,
    project_tangent,
    retract,
    scaled_gradient,
    transport,
)
from .objective import CostParts, ProblemData, chordal_distance_sq, cost, euclid_grad, riem_grad
from .observations import ObservationSet, SparseTensor3, nrmse, rmse
from .solver import IterTrace, SolveResult, SolverConfig, init_point, solve_rcg
from .tensor import RankDeficientError, matricize, mode_product, tucker_to_full, uf

__all__ = [
    "AmbientVector",
    "FeatureBasis",
    "MetricContext",
    "SolveError",
    "TuckerPoint",
    "metric_inner",
    "project_horizontal",
    "project_tangent",
    "retract",
    "scaled_gradient",
    "transport",
    "CostParts",
    "ProblemData",
    "chordal_distance_sq",
    "cost",
    "euclid_grad",
    "riem_grad",
    "ObservationSet",
    "SparseTensor3",
    "nrmse",
    "rmse",
    "IterTrace",
    "SolveResult",
    "SolverConfig",
    "init_point",
    "solve_rcg",
    "RankDeficientError",
    "matricize",
    "mode_product",
    "tucker_to_full",
    "uf",
]
