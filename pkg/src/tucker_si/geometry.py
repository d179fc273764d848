"""Geometry of the Tucker quotient manifold under the side-information metric.

A point of the total space is a :class:`TuckerPoint` ``(G, U0, U1, U2)`` with
orthonormal factor columns; tangent and horizontal vectors are
:class:`AmbientVector` instances obeying extra linear constraints.

The metric at ``(G, {U_i})`` is::

    <eta, xi> = sum_i <eta_i, xi_i G_i> + <eta_G, xi_G>
                + sum_i mu_i <eta_i, (I - P_i P_i^T) xi_i>

with ``G_i = G_(i) G_(i)^T``. Setting every ``mu_i = 0`` gives the plain
least-squares metric.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .tensor import (
    RankDeficientError,
    matricize,
    mode_product,
    other_modes,
    skw,
    sym,
    tucker_to_full,
    uf,
)
from .observations import tucker_entries_at

__all__ = [
    "TuckerPoint",
    "AmbientVector",
    "FeatureBasis",
    "MetricContext",
    "SolveError",
    "metric_inner",
    "scaled_gradient",
    "solve_tangent_S",
    "project_tangent",
    "solve_skew_system",
    "project_horizontal",
    "vertical_vector",
    "retract",
    "transport",
    "differential",
    "differential_at",
    "tangent_defect",
    "horizontal_defect",
]

METRIC_MODES = ("precond", "ls")


class SolveError(np.linalg.LinAlgError):
    """An inner linear system could not be solved."""


@dataclass(frozen=True)
class TuckerPoint:
    """Total-space point: core ``G`` and factors with orthonormal columns."""

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        core = np.asarray(self.core, dtype=float)
        factors = tuple(np.asarray(U, dtype=float) for U in self.factors)
        if core.ndim != 3 or len(factors) != 3:
            raise ValueError("a Tucker point needs a 3rd-order core and three factors")
        for k, U in enumerate(factors):
            if U.ndim != 2 or U.shape[1] != core.shape[k]:
                raise ValueError(
                    f"factor {k} has shape {U.shape}, core mode size {core.shape[k]}"
                )
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)

    @property
    def dims(self):
        return tuple(U.shape[0] for U in self.factors)

    @property
    def rank(self):
        return self.core.shape

    def full(self):
        return tucker_to_full(self.core, *self.factors)

    def entries(self, indices):
        return tucker_entries_at(self.core, *self.factors, indices)

    def transform(self, rotations):
        """Another representative of the class: ``(G x_i O_i^T, U_i O_i)``."""
        G = self.core
        for k, O in enumerate(rotations):
            G = mode_product(G, O.T, k)
        return TuckerPoint(G, tuple(U @ O for U, O in zip(self.factors, rotations)))

    def orthonormality_error(self):
        return max(
            np.abs(U.T @ U - np.eye(U.shape[1])).max(initial=0.0) for U in self.factors
        )


@dataclass(frozen=True)
class AmbientVector:
    """Element ``(Z_G, Z0, Z1, Z2)`` of the ambient Euclidean product space."""

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "core", np.asarray(self.core, dtype=float))
        object.__setattr__(
            self, "factors", tuple(np.asarray(Z, dtype=float) for Z in self.factors)
        )

    @classmethod
    def zeros_like(cls, point):
        return cls(np.zeros_like(point.core), tuple(np.zeros_like(U) for U in point.factors))

    @classmethod
    def random(cls, point, rng):
        return cls(
            rng.standard_normal(point.core.shape),
            tuple(rng.standard_normal(U.shape) for U in point.factors),
        )

    def __add__(self, other):
        return AmbientVector(
            self.core + other.core,
            tuple(a + b for a, b in zip(self.factors, other.factors)),
        )

    def __sub__(self, other):
        return AmbientVector(
            self.core - other.core,
            tuple(a - b for a, b in zip(self.factors, other.factors)),
        )

    def __neg__(self):
        return AmbientVector(-self.core, tuple(-a for a in self.factors))

    def __mul__(self, s):
        s = float(s)
        return AmbientVector(s * self.core, tuple(s * a for a in self.factors))

    __rmul__ = __mul__

    def euclid_inner(self, other):
        return float(
            np.vdot(self.core, other.core)
            + sum(np.vdot(a, b) for a, b in zip(self.factors, other.factors))
        )

    def norm(self):
        return float(np.sqrt(self.euclid_inner(self)))

    def transform(self, rotations):
        """Move the vector along with :meth:`TuckerPoint.transform`."""
        G = self.core
        for k, O in enumerate(rotations):
            G = mode_product(G, O.T, k)
        return AmbientVector(G, tuple(Z @ O for Z, O in zip(self.factors, rotations)))


class FeatureBasis:
    """Orthonormal per-mode feature bases and their side-information weights.

    Parameters
    ----------
    features : sequence of three arrays or None
        Raw feature matrices ``F_i`` of shape ``(n_i, k_i)``. They are
        orthonormalized with a thin QR factorization. ``None`` means the mode
        has no side information (its weight must then be zero).
    alpha : sequence of three floats
        Non-negative side-information weights.
    dims : tuple of int
        Tensor dimensions.
    n_obs : int
        Number of observed entries; sets the cost weights ``nu = alpha |Omega|``.
        The metric weights are ``mu = alpha n1 n2 n3``.
    orthonormalize : bool
        Set to False when the inputs already have orthonormal columns.
    """

    def __init__(self, features, alpha, dims, n_obs, orthonormalize=True):
        dims = tuple(int(d) for d in dims)
        alpha = np.asarray(alpha, dtype=float).reshape(-1)
        if alpha.shape != (3,) or np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
            raise ValueError(f"alpha must be three non-negative numbers, got {alpha}")
        if features is None:
            features = (None, None, None)
        bases = []
        for k, F in enumerate(features):
            if F is None:
                if alpha[k] > 0:
                    raise ValueError(f"mode {k} has a positive weight but no features")
                bases.append(np.zeros((dims[k], 0)))
                continue
            F = np.asarray(F, dtype=float)
            if F.ndim != 2 or F.shape[0] != dims[k]:
                raise ValueError(
                    f"feature matrix {k} has shape {F.shape}, expected {dims[k]} rows"
                )
            if orthonormalize and F.shape[1]:
                Q, R = np.linalg.qr(F)
                if np.abs(np.diag(R)).min() <= F.shape[0] * np.finfo(float).eps * np.abs(R).max():
                    raise RankDeficientError(f"feature matrix {k} is rank deficient")
                F = Q
            bases.append(F)
        self.bases = tuple(bases)
        self.alpha = alpha
        self.dims = dims
        self.n_obs = int(n_obs)
        self.N = int(np.prod(dims, dtype=np.int64))

    @classmethod
    def none(cls, dims, n_obs):
        return cls(None, (0.0, 0.0, 0.0), dims, n_obs)

    @property
    def k(self):
        return tuple(P.shape[1] for P in self.bases)

    @property
    def mu(self):
        """Metric weights ``N alpha_i``."""
        return self.N * self.alpha

    @property
    def nu(self):
        """Cost weights ``|Omega| alpha_i``."""
        return self.n_obs * self.alpha

    def project(self, k, X):
        """``P_k P_k^T X``."""
        P = self.bases[k]
        return P @ (P.T @ X)

    def complement(self, k, X):
        """``(I - P_k P_k^T) X``."""
        return X - self.project(k, X)

    def check_rank(self, rank):
        for k, (kk, r) in enumerate(zip(self.k, rank)):
            if 0 < kk < r and self.alpha[k] > 0:
                warnings.warn(
                    f"mode {k}: {kk} feature columns for rank {r}; the feature "
                    "span cannot contain the factor span",
                    stacklevel=2,
                )


def _spd_inverse(M, name):
    """Inverse of a symmetric PSD matrix, with a small ridge when near singular."""
    r = M.shape[0]
    M = sym(M)
    scale = np.trace(M) / r if r else 0.0
    if scale <= 0 or not np.isfinite(scale):
        raise SolveError(f"{name} is zero; the core has lost multilinear rank")
    delta = 1e-12 * scale
    if np.linalg.eigvalsh(M)[0] <= delta:
        warnings.warn(
            f"{name} is numerically singular; adding a ridge of {delta:.3e}",
            RuntimeWarning,
            stacklevel=3,
        )
        M = M + delta * np.eye(r)
    cho = scipy.linalg.cho_factor(M)
    return scipy.linalg.cho_solve(cho, np.eye(r))


class MetricContext:
    """Quantities cached at a point for metric, gradient and projector evaluation.

    Parameters
    ----------
    point : TuckerPoint
    features : FeatureBasis
    metric : {"precond", "ls"}
        ``"precond"`` uses the side-information weights ``mu_i = N alpha_i``;
        ``"ls"`` sets every ``mu_i`` to zero.
    """

    def __init__(self, point, features, metric="precond"):
        if metric not in METRIC_MODES:
            raise ValueError(f"metric must be one of {METRIC_MODES}, got {metric!r}")
        if point.dims != features.dims:
            raise ValueError(f"point dims {point.dims} vs feature dims {features.dims}")
        self.point = point
        self.features = features
        self.metric = metric
        self.mu = features.mu.copy() if metric == "precond" else np.zeros(3)
        G = point.core
        self.unfoldings = tuple(matricize(G, k) for k in range(3))
        self.G = tuple(Gk @ Gk.T for Gk in self.unfoldings)
        self.Galpha = tuple(
            Gk + m * np.eye(Gk.shape[0]) for Gk, m in zip(self.G, self.mu)
        )
        self.G_inv = tuple(_spd_inverse(Gk, f"G_{k}") for k, Gk in enumerate(self.G))
        self.Galpha_inv = tuple(
            Gi if m == 0 else _spd_inverse(Ga, f"G_alpha_{k}")
            for k, (Gi, Ga, m) in enumerate(zip(self.G_inv, self.Galpha, self.mu))
        )
        self.V = tuple(features.project(k, U) for k, U in enumerate(point.factors))
        self.W = tuple(U - V for U, V in zip(point.factors, self.V))
        self.VtV = tuple(V.T @ V for V in self.V)
        self.WtW = tuple(W.T @ W for W in self.W)


def metric_inner(ctx, eta, xi):
    """Metric inner product of two ambient vectors at ``ctx.point``."""
    val = float(np.vdot(eta.core, xi.core))
    for k in range(3):
        val += float(np.vdot(eta.factors[k], xi.factors[k] @ ctx.G[k]))
        if ctx.mu[k]:
            val += ctx.mu[k] * float(
                np.vdot(eta.factors[k], ctx.features.complement(k, xi.factors[k]))
            )
    return val


def scaled_gradient(ctx, egrad):
    """Represent the Euclidean gradient in the metric (Riesz map on ambient space)."""
    factors = []
    for k in range(3):
        E = ctx.features.project(k, egrad.factors[k])
        F = egrad.factors[k] - E
        factors.append(E @ ctx.G_inv[k] + F @ ctx.Galpha_inv[k])
    return AmbientVector(egrad.core.copy(), tuple(factors))


# ---------------------------------------------------------------------------
# inner linear solves


def _inner_list(a, b):
    return sum(float(np.vdot(x, y)) for x, y in zip(a, b))


def _cg(apply, rhs, rtol, maxiter):
    """Conjugate gradients over lists of matrices with the Frobenius inner product."""
    x = [np.zeros_like(b) for b in rhs]
    r = [b.copy() for b in rhs]
    p = [b.copy() for b in rhs]
    rr = _inner_list(r, r)
    target = (rtol * np.sqrt(_inner_list(rhs, rhs))) ** 2
    if rr <= target:
        return x, True
    for _ in range(maxiter):
        Ap = apply(p)
        pAp = _inner_list(p, Ap)
        if pAp <= 0:
            return x, False
        a = rr / pAp
        x = [xi + a * pi for xi, pi in zip(x, p)]
        r = [ri - a * ai for ri, ai in zip(r, Ap)]
        rr_new = _inner_list(r, r)
        if rr_new <= target:
            break
        p = [ri + (rr_new / rr) * pi for ri, pi in zip(r, p)]
        rr = rr_new
    # true residual, the recurrence drifts
    res = [b - a for b, a in zip(rhs, apply(x))]
    return x, _inner_list(res, res) <= target


def _basis(shapes, kind):
    """Frobenius-orthonormal basis of symmetric or skew matrices, per block."""
    out = []
    for block, n in enumerate(shapes):
        for i in range(n):
            for j in range(i if kind == "sym" else i + 1, n):
                E = [np.zeros((m, m)) for m in shapes]
                if i == j:
                    E[block][i, i] = 1.0
                else:
                    c = 1.0 / np.sqrt(2.0)
                    E[block][i, j] = c
                    E[block][j, i] = c if kind == "sym" else -c
                out.append(E)
    return out


def _dense_solve(apply, rhs, kind):
    """Solve by assembling the operator in a basis of symmetric/skew matrices."""
    shapes = [b.shape[0] for b in rhs]
    basis = _basis(shapes, kind)
    if not basis:
        return [np.zeros_like(b) for b in rhs]
    images = [apply(E) for E in basis]
    A = np.array([[_inner_list(Ea, Lb) for Lb in images] for Ea in basis])
    y = np.array([_inner_list(Ea, rhs) for Ea in basis])
    try:
        c = np.linalg.solve(A, y)
    except np.linalg.LinAlgError as err:
        raise SolveError(f"singular {kind} system: {err}") from err
    if not np.all(np.isfinite(c)):
        raise SolveError(f"singular {kind} system")
    return [sum(ci * E[b] for ci, E in zip(c, basis)) for b in range(len(rhs))]


def _solve(apply, rhs, kind, method, rtol, maxiter):
    if method not in ("cg", "dense"):
        raise ValueError(f"unknown inner solver {method!r}")
    if method == "cg":
        x, ok = _cg(apply, rhs, rtol, maxiter)
        if ok:
            return x
    return _dense_solve(apply, rhs, kind)


def _tangent_operator(ctx, k):
    A, B = ctx.VtV[k], ctx.WtW[k]
    Gi, Gai = ctx.G_inv[k], ctx.Galpha_inv[k]

    def apply(S):
        return sym(A @ S @ Gi + B @ S @ Gai)

    return apply


def solve_tangent_S(ctx, rhs, method="cg", rtol=1e-12, maxiter=200):
    """Solve ``sym(V^T V S G^-1 + W^T W S Galpha^-1) = rhs`` for symmetric ``S``, per mode."""
    out = []
    for k in range(3):
        op = _tangent_operator(ctx, k)
        (S,) = _solve(lambda X, op=op: [op(X[0])], [sym(rhs[k])], "sym", method, rtol, maxiter)
        out.append(sym(S))
    return out


def project_tangent(ctx, Z, method="cg"):
    """Metric-orthogonal projection of an ambient vector onto the tangent space."""
    U = ctx.point.factors
    rhs = [sym(U[k].T @ Z.factors[k]) for k in range(3)]
    S = solve_tangent_S(ctx, rhs, method=method)
    factors = tuple(
        Z.factors[k]
        - ctx.V[k] @ (S[k] @ ctx.G_inv[k])
        - ctx.W[k] @ (S[k] @ ctx.Galpha_inv[k])
        for k in range(3)
    )
    return AmbientVector(Z.core.copy(), factors)


def vertical_vector(point, omegas):
    """Vertical vector ``(-sum_i G x_i Om_i, {U_i Om_i})`` for skew ``Om_i``."""
    G = point.core
    core = -sum(mode_product(G, Om, k) for k, Om in enumerate(omegas))
    return AmbientVector(core, tuple(U @ Om for U, Om in zip(point.factors, omegas)))


def _vertical_dual(ctx, eta):
    """Skew parts of ``U_i^T eta_i G_i + mu_i W_i^T eta_i - (eta_G)_(i) G_(i)^T``.

    These are the coefficients of the metric pairing between ``eta`` and the
    vertical vector generated by skew matrices; they vanish exactly on the
    horizontal space.
    """
    out = []
    for k in range(3):
        U, Gk = ctx.point.factors[k], ctx.unfoldings[k]
        C = U.T @ eta.factors[k] @ ctx.G[k] - matricize(eta.core, k) @ Gk.T
        if ctx.mu[k]:
            C = C + ctx.mu[k] * (ctx.W[k].T @ eta.factors[k])
        out.append(skw(C))
    return out


def _skew_operator(ctx):
    G = ctx.point.core

    def apply(omegas):
        out = []
        for k in range(3):
            Om = omegas[k]
            M = ctx.VtV[k] @ Om @ ctx.G[k] + ctx.G[k] @ Om + ctx.WtW[k] @ Om @ ctx.Galpha[k]
            M = skw(M)
            for j in other_modes(k):
                M = M + matricize(mode_product(G, omegas[j], j), k) @ ctx.unfoldings[k].T
            out.append(M)
        return out

    return apply


def solve_skew_system(ctx, rhs, method="cg", rtol=1e-12, maxiter=200):
    """Solve the coupled system for the skew matrices of the horizontal projection."""
    rhs = [skw(b) for b in rhs]
    return [skw(x) for x in _solve(_skew_operator(ctx), rhs, "skew", method, rtol, maxiter)]


def project_horizontal(ctx, eta, method="cg"):
    """Metric-orthogonal projection of a tangent vector onto the horizontal space."""
    omegas = solve_skew_system(ctx, _vertical_dual(ctx, eta), method=method)
    return eta - vertical_vector(ctx.point, omegas)


def transport(ctx, direction, method="cg"):
    """Carry a previous search direction into the horizontal space at ``ctx.point``."""
    return project_horizontal(ctx, project_tangent(ctx, direction, method), method)


def retract(point, eta, t=1.0):
    """``(G + t eta_G, {uf(U_i + t eta_i)})``."""
    if t == 0:
        return point
    return TuckerPoint(
        point.core + t * eta.core,
        tuple(uf(U + t * Z) for U, Z in zip(point.factors, eta.factors)),
    )


def differential(point, eta):
    """Dense first-order change of ``G x U`` along ``eta``."""
    G, (U0, U1, U2) = point.core, point.factors
    Z0, Z1, Z2 = eta.factors
    return (
        tucker_to_full(eta.core, U0, U1, U2)
        + tucker_to_full(G, Z0, U1, U2)
        + tucker_to_full(G, U0, Z1, U2)
        + tucker_to_full(G, U0, U1, Z2)
    )


def differential_at(point, eta, indices):
    """:func:`differential` evaluated only at the given index triples."""
    G, (U0, U1, U2) = point.core, point.factors
    Z0, Z1, Z2 = eta.factors
    return (
        tucker_entries_at(eta.core, U0, U1, U2, indices)
        + tucker_entries_at(G, Z0, U1, U2, indices)
        + tucker_entries_at(G, U0, Z1, U2, indices)
        + tucker_entries_at(G, U0, U1, Z2, indices)
    )


def tangent_defect(point, eta):
    """Largest relative size of ``sym(U_i^T eta_i)``; zero for tangent vectors."""
    out = 0.0
    for U, Z in zip(point.factors, eta.factors):
        scale = max(np.linalg.norm(Z), np.finfo(float).tiny)
        out = max(out, np.linalg.norm(sym(U.T @ Z)) / scale)
    return float(out)


def horizontal_defect(ctx, eta):
    """Largest relative size of the horizontal-space residual; zero for horizontal vectors."""
    out = 0.0
    for k, C in enumerate(_vertical_dual(ctx, eta)):
        scale = (
            np.linalg.norm(eta.factors[k]) * (np.linalg.norm(ctx.G[k], 2) + ctx.mu[k])
            + np.linalg.norm(eta.core) * np.linalg.norm(ctx.unfoldings[k], 2)
        )
        scale = max(scale, np.finfo(float).tiny)
        out = max(out, np.linalg.norm(C) / scale)
    return float(out)
