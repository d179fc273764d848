"""Riemannian conjugate gradient on the Tucker quotient manifold."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .geometry import (
    METRIC_MODES,
    AmbientVector,
    MetricContext,
    TuckerPoint,
    differential_at,
    metric_inner,
    retract,
    transport,
)
from .objective import cost, euclid_grad, riem_grad
from .observations import sparse_core_product, sparse_residual
from .tensor import RankDeficientError, matricize, uf

__all__ = [
    "SolverConfig",
    "IterTrace",
    "SolveResult",
    "LineSearchError",
    "solve_rcg",
    "beta_fr_plus",
    "beta_pr_plus",
    "compose_direction",
    "line_search",
    "initial_step",
    "init_point",
]

BETA_RULES = ("hybrid", "fr", "pr")
TERMINATION_REASONS = ("grad_tol", "max_iters", "nrmse_target", "line_search_failure")


class LineSearchError(RuntimeError):
    """No step satisfied the sufficient-decrease condition."""


@dataclass(frozen=True)
class SolverConfig:
    """Options for :func:`solve_rcg`.

    ``grad_tol`` bounds the *squared* metric norm of the Riemannian gradient,
    so the default ``1e-8`` corresponds to a gradient norm of ``1e-4``.
    """

    max_iters: int = 300
    grad_tol: float = 1e-8
    nrmse_target: float | None = None
    metric: str = "precond"
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_trials: int = 30
    seed: int = 0
    init_mode: str = "random"
    inner_solver: str = "cg"
    beta_rule: str = "hybrid"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.nrmse_target is not None and not self.nrmse_target > 0:
            raise ValueError("nrmse_target must be positive")
        if self.metric not in METRIC_MODES:
            raise ValueError(f"metric must be one of {METRIC_MODES}")
        if not 0 < self.armijo_c < 1 or not 0 < self.backtrack < 1:
            raise ValueError("armijo_c and backtrack must lie in (0, 1)")
        if self.max_trials < 1:
            raise ValueError("max_trials must be at least 1")
        if self.beta_rule not in BETA_RULES:
            raise ValueError(f"beta_rule must be one of {BETA_RULES}")
        if self.init_mode not in ("random", "hosvd"):
            raise ValueError("init_mode must be 'random' or 'hosvd'")


@dataclass(frozen=True)
class IterTrace:
    iter: int
    seconds: float
    cost: float
    grad_norm_sq: float
    step: float
    beta: float
    train_rmse: float
    test_rmse: float | None = None


@dataclass
class SolveResult:
    point: TuckerPoint
    trace: list = field(default_factory=list)
    reason: str = "max_iters"

    @property
    def iterations(self):
        return self.trace[-1].iter if self.trace else 0


def beta_fr_plus(ctx_new, xi_new, ctx_old, xi_old):
    """Fletcher-Reeves ratio ``<xi_new, xi_new> / <xi_old, xi_old>``, clamped at zero."""
    old = metric_inner(ctx_old, xi_old, xi_old)
    if not old > 0:
        return 0.0
    return max(metric_inner(ctx_new, xi_new, xi_new) / old, 0.0)


def beta_pr_plus(ctx_new, xi_new, ctx_old, xi_old, method="cg"):
    """Polak-Ribiere ratio with the old gradient transported to the new point, clamped at zero."""
    old = metric_inner(ctx_old, xi_old, xi_old)
    if not old > 0:
        return 0.0
    diff = xi_new - transport(ctx_new, xi_old, method)
    return max(metric_inner(ctx_new, xi_new, diff) / old, 0.0)


def compose_direction(ctx, xi, beta, prev_dir, method="cg"):
    """``-xi + beta T(prev_dir)``, restarting with ``-xi`` when that is not a descent direction.

    Returns the direction and the beta actually used.
    """
    if prev_dir is None or beta == 0:
        return -xi, 0.0
    eta = -xi + beta * transport(ctx, prev_dir, method)
    if metric_inner(ctx, eta, xi) >= 0:
        return -xi, 0.0
    return eta, beta


def initial_step(point, data, eta, slope, residual=None):
    """Minimizer of the quadratic model of the cost along the linearized move.

    ``slope`` is the directional derivative ``<xi, eta>``. The model keeps the
    data term linearized through the differential of the Tucker map and adds
    the curvature of the feature regularizer, which is exact in ``eta_i``.
    """
    D = differential_at(point, eta, data.train.indices)
    curv = float(D @ D)
    fb = data.features
    for k in range(3):
        if fb.nu[k]:
            curv += fb.nu[k] * float(np.sum(fb.complement(k, eta.factors[k]) ** 2))
    if not curv > 0:
        return 1.0
    return -slope / curv


def line_search(point, data, ctx, eta, xi, config=SolverConfig(), t_init=None, f0=None):
    """Armijo backtracking along ``retract(point, eta, t)``.

    Returns ``(t, new_point, new_cost)``.
    """
    slope = metric_inner(ctx, xi, eta)
    if not slope < 0:
        raise ValueError("eta is not a descent direction")
    if f0 is None:
        f0 = cost(point, data).total
    t = initial_step(point, data, eta, slope) if t_init is None else float(t_init)
    if not (np.isfinite(t) and t > 0):
        t = 1.0
    for _ in range(config.max_trials):
        try:
            cand = retract(point, eta, t)
        except RankDeficientError:
            t *= config.backtrack
            continue
        f = cost(cand, data)
        if f.total <= f0 + config.armijo_c * t * slope:
            return t, cand, f
        t *= config.backtrack
    raise LineSearchError(f"no sufficient decrease after {config.max_trials} trials")


def _hosvd_factor(obs, k, r):
    rows = obs.indices[:, k]
    cols = np.ravel_multi_index(
        np.delete(obs.indices, k, axis=1).T,
        tuple(n for m, n in enumerate(obs.dims) if m != k),
    )
    rest = int(np.prod([n for m, n in enumerate(obs.dims) if m != k]))
    M = sparse.csr_matrix((obs.values, (rows, cols)), shape=(obs.dims[k], rest))
    gram = np.asarray((M @ M.T).todense())
    w, V = np.linalg.eigh(gram)
    return V[:, ::-1][:, :r].copy()


def init_point(data, config=SolverConfig(), rng=None):
    """Starting point: random orthonormal factors with a Gaussian core, or a truncated HOSVD.

    The HOSVD factors are the leading left singular vectors of the zero-filled
    unfoldings and the core is ``P_Omega(R) x_i U_i^T``. Under very sparse
    sampling those singular vectors localize on a few entries and the core
    loses multilinear rank; a warning is issued and a random start is the
    better choice.
    """
    rank, dims = data.rank, data.dims
    if any(r > n for r, n in zip(rank, dims)):
        raise ValueError(f"rank {rank} exceeds dims {dims}")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if config.init_mode == "random":
        factors = tuple(uf(rng.standard_normal((n, r))) for n, r in zip(dims, rank))
        return TuckerPoint(rng.standard_normal(rank), factors)
    factors = tuple(_hosvd_factor(data.train, k, rank[k]) for k in range(3))
    core = sparse_core_product(data.train, *factors)
    for k in range(3):
        sv = np.linalg.svd(matricize(core, k), compute_uv=False)
        if not sv[-1] > 1e-8 * sv[0]:
            warnings.warn(
                f"HOSVD core is rank deficient in mode {k} (sampling too sparse); "
                "consider init_mode='random'",
                RuntimeWarning,
                stacklevel=2,
            )
            break
    return TuckerPoint(core, factors)


def _rmse_from(values):
    return float(np.sqrt(np.mean(values**2)))


def solve_rcg(data, config=SolverConfig(), init=None, sink=None):
    """Minimize the regularized completion cost by Riemannian CG.

    Parameters
    ----------
    data : ProblemData
    config : SolverConfig
    init : TuckerPoint, optional
        Defaults to :func:`init_point` with ``config.seed``.
    sink : callable, optional
        Called with every :class:`IterTrace` as it is produced.

    Returns
    -------
    SolveResult
    """
    start = time.perf_counter()
    point = init if init is not None else init_point(data, config)
    if point.dims != data.dims or point.rank != data.rank:
        raise ValueError("initial point does not match the problem dims and rank")
    method = config.inner_solver
    result = SolveResult(point)

    def record(it, point, res, f, gn, step, beta):
        test = None
        if data.test is not None:
            test = _rmse_from(point.entries(data.test.indices) - data.test.values)
        tr = IterTrace(
            it, time.perf_counter() - start, f.total, gn, step, beta,
            _rmse_from(res.values), test,
        )
        result.trace.append(tr)
        if sink is not None:
            sink(tr)

    spread = float(np.ptp(data.train.values)) or 1.0
    ctx = MetricContext(point, data.features, config.metric)
    res = sparse_residual(point, data.train)
    f = cost(point, data, res)
    xi = riem_grad(ctx, point, data, euclid_grad(point, data, res))
    gn = metric_inner(ctx, xi, xi)
    record(0, point, res, f, gn, 0.0, 0.0)

    eta = None
    for it in range(1, config.max_iters + 1):
        if gn <= config.grad_tol:
            result.reason = "grad_tol"
            break
        if config.nrmse_target is not None and result.trace[-1].train_rmse / spread <= config.nrmse_target:
            result.reason = "nrmse_target"
            break
        if eta is None:
            beta = 0.0
        elif config.beta_rule == "fr":
            beta = beta_fr_plus(ctx, xi, ctx_old, xi_old)
        elif config.beta_rule == "pr":
            beta = beta_pr_plus(ctx, xi, ctx_old, xi_old, method)
        else:
            beta = min(
                beta_pr_plus(ctx, xi, ctx_old, xi_old, method),
                beta_fr_plus(ctx, xi, ctx_old, xi_old),
            )
        eta, beta = compose_direction(ctx, xi, beta, eta, method)
        try:
            t, point, f = line_search(point, data, ctx, eta, xi, config, f0=f.total)
        except LineSearchError:
            result.reason = "line_search_failure"
            break
        ctx_old, xi_old = ctx, xi
        ctx = MetricContext(point, data.features, config.metric)
        res = sparse_residual(point, data.train)
        xi = riem_grad(ctx, point, data, euclid_grad(point, data, res))
        gn = metric_inner(ctx, xi, xi)
        record(it, point, res, f, gn, t, beta)
    else:
        result.reason = "grad_tol" if gn <= config.grad_tol else "max_iters"
    result.point = point
    return result
