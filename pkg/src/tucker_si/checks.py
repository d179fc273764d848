"""Numerical self-checks of the geometry and objective on random small instances.

Each check returns the worst error it saw; :func:`run_checks` compares them
with fixed thresholds. The same routines back the ``gradcheck`` command and
the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    AmbientVector,
    FeatureBasis,
    MetricContext,
    TuckerPoint,
    differential,
    horizontal_defect,
    metric_inner,
    project_horizontal,
    project_tangent,
    retract,
    scaled_gradient,
    tangent_defect,
)
from .objective import ProblemData, valid_rank, chordal_distance_sq, cost, euclid_grad, riem_grad
from .observations import ObservationSet
from .tensor import mode_product, uf

__all__ = ["Instance", "random_instance", "random_orthogonal", "taylor_ratios", "CHECKS", "run_checks"]

THRESHOLDS = {
    "fd_gradient": 1e-5,
    "riemannian_fd": 1e-5,
    "scaled_gradient_adjoint": 1e-8,
    "tangent_idempotence": 1e-8,
    "tangent_orthogonality": 1e-8,
    "horizontal_idempotence": 1e-8,
    "horizontal_flag": 1e-8,
    "metric_invariance": 1e-8,
    "retraction_invariance": 1e-8,
    "prop2_identity": 1e-8,
    # ratio of the largest to the smallest Taylor remainder over t in {1e-2, 1e-3, 1e-4}
    "retraction_order": 2.0,
}


@dataclass
class Instance:
    point: TuckerPoint
    data: ProblemData
    ctx: MetricContext


def random_orthogonal(n, rng):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def random_instance(rng, max_dim=12, max_rank=4, max_features=8, metric="precond", corrupt=False):
    """A random point with random observations, features and weights."""
    dims = tuple(int(n) for n in rng.integers(3, max_dim + 1, size=3))
    while True:
        rank = tuple(int(rng.integers(1, min(max_rank, n - 1) + 1)) for n in dims)
        if valid_rank(rank):
            break
    N = int(np.prod(dims))
    m = int(rng.integers(max(N // 4, 1), N // 2 + 2))
    lin = rng.choice(N, size=min(m, N), replace=False)
    idx = np.stack(np.unravel_index(lin, dims), axis=1)
    train = ObservationSet(dims, idx, rng.standard_normal(len(lin)))
    feats = [
        rng.standard_normal((n, int(rng.integers(r, min(max_features, n) + 1))))
        for n, r in zip(dims, rank)
    ]
    alpha = rng.uniform(0.0, 1.0, size=3) / N
    fb = FeatureBasis(feats, alpha, dims, len(train))
    data = ProblemData(train, fb, rank)
    point = TuckerPoint(
        rng.standard_normal(rank),
        tuple(uf(rng.standard_normal((n, r))) for n, r in zip(dims, rank)),
    )
    ctx = MetricContext(point, fb, metric)
    if corrupt:
        ctx = _corrupted(ctx)
    return Instance(point, data, ctx)


def _corrupted(ctx):
    """Negative control: perturb the cached inverse so the Riesz map is wrong."""
    ctx.G_inv = tuple(1.01 * Gi for Gi in ctx.G_inv)
    ctx.Galpha_inv = tuple(1.01 * Gi for Gi in ctx.Galpha_inv)
    return ctx


def _rel(a, b):
    scale = max(abs(a), abs(b), np.finfo(float).tiny)
    return abs(a - b) / scale


def _unit(v):
    return v * (1.0 / v.norm())


def check_fd_gradient(inst, rng, n_dirs=20, h=1e-6):
    """Euclidean gradient against central differences along ambient directions.

    Errors are relative to the gradient norm, the largest possible size of a
    derivative along a unit direction.
    """
    p, data = inst.point, inst.data
    g = euclid_grad(p, data)
    worst = 0.0
    for _ in range(n_dirs):
        Z = _unit(AmbientVector.random(p, rng))

        def f(t):
            q = TuckerPoint(p.core + t * Z.core, tuple(U + t * z for U, z in zip(p.factors, Z.factors)))
            return cost(q, data).total

        fd = (f(h) - f(-h)) / (2 * h)
        # Z has unit norm, so |<g, Z>| <= ||g|| sets the scale
        worst = max(worst, abs(fd - g.euclid_inner(Z)) / g.norm())
    return worst


def check_riemannian_fd(inst, rng, n_dirs=20, h=1e-6):
    """Riemannian gradient against central differences along the retraction."""
    p, data, ctx = inst.point, inst.data, inst.ctx
    xi = riem_grad(ctx, p, data)
    xi_norm = np.sqrt(metric_inner(ctx, xi, xi))
    worst = 0.0
    for _ in range(n_dirs):
        eta = project_tangent(ctx, AmbientVector.random(p, rng))
        eta = eta * (1.0 / np.sqrt(metric_inner(ctx, eta, eta)))
        fd = (cost(retract(p, eta, h), data).total - cost(retract(p, eta, -h), data).total) / (2 * h)
        worst = max(worst, abs(fd - metric_inner(ctx, xi, eta)) / xi_norm)
    return worst


def check_scaled_gradient_adjoint(inst, rng, n_dirs=20):
    p, ctx = inst.point, inst.ctx
    E = AmbientVector.random(p, rng)
    S = scaled_gradient(ctx, E)
    worst = 0.0
    for _ in range(n_dirs):
        Z = AmbientVector.random(p, rng)
        worst = max(worst, _rel(metric_inner(ctx, S, Z), E.euclid_inner(Z)))
    return worst


def check_tangent(inst, rng, n_dirs=20):
    p, ctx = inst.point, inst.ctx
    Z = AmbientVector.random(p, rng)
    T = project_tangent(ctx, Z)
    idem = (project_tangent(ctx, T) - T).norm() / T.norm()
    R = Z - T
    orth = 0.0
    nR = np.sqrt(abs(metric_inner(ctx, R, R)))
    for _ in range(n_dirs):
        eta = project_tangent(ctx, AmbientVector.random(p, rng))
        ne = np.sqrt(metric_inner(ctx, eta, eta))
        orth = max(orth, abs(metric_inner(ctx, R, eta)) / (nR * ne))
    return max(idem, tangent_defect(p, T)), orth


def check_horizontal(inst, rng):
    p, ctx = inst.point, inst.ctx
    eta = project_tangent(ctx, AmbientVector.random(p, rng))
    H = project_horizontal(ctx, eta)
    idem = (project_horizontal(ctx, H) - H).norm() / H.norm()
    return idem, max(horizontal_defect(ctx, H), tangent_defect(p, H))


def check_invariance(inst, rng):
    """Metric and cost under a random class transformation, and retraction compatibility."""
    p, data, ctx = inst.point, inst.data, inst.ctx
    O = [random_orthogonal(r, rng) for r in p.rank]
    q = p.transform(O)
    ctx_q = MetricContext(q, data.features, ctx.metric)
    a = project_tangent(ctx, AmbientVector.random(p, rng))
    b = project_tangent(ctx, AmbientVector.random(p, rng))
    metric_err = _rel(metric_inner(ctx, a, b), metric_inner(ctx_q, a.transform(O), b.transform(O)))
    cost_err = _rel(cost(p, data).total, cost(q, data).total)
    r1 = retract(p, a, 0.3).transform(O)
    r2 = retract(q, a.transform(O), 0.3)
    retr_err = max(
        np.abs(r1.core - r2.core).max() / np.abs(r1.core).max(),
        max(np.abs(u - v).max() for u, v in zip(r1.factors, r2.factors)),
    )
    return max(metric_err, cost_err), retr_err


def check_prop2(inst):
    p, fb = inst.point, inst.data.features
    c = cost(p, inst.data)
    worst = 0.0
    for k in range(3):
        P, U = fb.bases[k], p.factors[k]
        expected = 0.5 * fb.nu[k] * (chordal_distance_sq(U, P) - (P.shape[1] - U.shape[1]))
        # the regularizer never exceeds nu r / 2, which sets the scale
        scale = max(0.5 * fb.nu[k] * U.shape[1], np.finfo(float).tiny)
        worst = max(worst, abs(c.reg_terms[k] - expected) / scale)
    return worst


def taylor_ratios(point, eta, ts=(1e-2, 1e-3, 1e-4)):
    """``||tensor(R(t eta)) - tensor - t D[eta]|| / t^2`` for each ``t``."""
    X = point.full()
    D = differential(point, eta)
    return [np.linalg.norm(retract(point, eta, t).full() - X - t * D) / t**2 for t in ts]


def check_retraction_order(inst, rng):
    p, ctx = inst.point, inst.ctx
    eta = _unit(project_tangent(ctx, AmbientVector.random(p, rng)))
    r = taylor_ratios(p, eta)
    return max(r) / min(r)


def run_checks(trials=3, seed=0, max_dim=12, max_rank=4, corrupt_metric=False):
    """Run every check on ``trials`` random instances.

    Returns
    -------
    list of (name, worst_error, threshold, passed)
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(THRESHOLDS, 0.0)

    def upd(name, v):
        worst[name] = max(worst[name], float(v))

    for _ in range(trials):
        inst = random_instance(rng, max_dim, max_rank, corrupt=corrupt_metric)
        upd("fd_gradient", check_fd_gradient(inst, rng))
        upd("riemannian_fd", check_riemannian_fd(inst, rng))
        upd("scaled_gradient_adjoint", check_scaled_gradient_adjoint(inst, rng))
        idem, orth = check_tangent(inst, rng)
        upd("tangent_idempotence", idem)
        upd("tangent_orthogonality", orth)
        idem, flag = check_horizontal(inst, rng)
        upd("horizontal_idempotence", idem)
        upd("horizontal_flag", flag)
        inv, retr = check_invariance(inst, rng)
        upd("metric_invariance", inv)
        upd("retraction_invariance", retr)
        upd("prop2_identity", check_prop2(inst))
        upd("retraction_order", check_retraction_order(inst, rng))
    return [(k, worst[k], THRESHOLDS[k], worst[k] <= THRESHOLDS[k]) for k in THRESHOLDS]


CHECKS = tuple(THRESHOLDS)
