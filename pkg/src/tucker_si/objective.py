"""Regularized completion cost, its Euclidean and Riemannian gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import AmbientVector, FeatureBasis, MetricContext, project_tangent, scaled_gradient
from .observations import ObservationSet, sparse_core_product, sparse_mat_kron, sparse_residual
from .tensor import matricize, other_modes

__all__ = [
    "ProblemData",
    "CostParts",
    "cost",
    "euclid_grad",
    "riem_grad",
    "chordal_distance_sq",
    "valid_rank",
]


def valid_rank(rank):
    """A multilinear rank is attainable only if each ``r_k`` is at most the product of the others."""
    r = tuple(rank)
    return all(r[k] <= r[(k + 1) % 3] * r[(k + 2) % 3] for k in range(3))


@dataclass(frozen=True)
class ProblemData:
    """Training observations, side information and target rank.

    Attributes
    ----------
    train : ObservationSet
    features : FeatureBasis
        Its ``n_obs`` must equal ``len(train)``.
    rank : tuple of int
    test : ObservationSet or None
    """

    train: ObservationSet
    features: FeatureBasis
    rank: tuple
    test: ObservationSet | None = None

    def __post_init__(self):
        rank = tuple(int(r) for r in self.rank)
        object.__setattr__(self, "rank", rank)
        dims = self.train.dims
        if len(self.train) == 0:
            raise ValueError("the training set is empty")
        if len(rank) != 3 or any(r < 1 or r > n for r, n in zip(rank, dims)):
            raise ValueError(f"rank {rank} is invalid for dims {dims}")
        if not valid_rank(rank):
            raise ValueError(f"rank {rank} is not a multilinear rank: some r_k exceeds the product of the others")
        if self.features.dims != dims:
            raise ValueError(f"feature dims {self.features.dims} vs data dims {dims}")
        if self.features.n_obs != len(self.train):
            raise ValueError("features.n_obs must equal the number of training entries")
        if self.test is not None and self.test.dims != dims:
            raise ValueError(f"test dims {self.test.dims} vs train dims {dims}")

    @property
    def dims(self):
        return self.train.dims

    @classmethod
    def build(cls, train, rank, features=None, alpha=(0.0, 0.0, 0.0), test=None):
        """Convenience constructor from raw (non-orthonormal) feature matrices."""
        fb = FeatureBasis(features, alpha, train.dims, len(train))
        fb.check_rank(rank)
        return cls(train, fb, rank, test)


@dataclass(frozen=True)
class CostParts:
    data_term: float
    reg_terms: tuple
    total: float


def cost(point, data, residual=None):
    """``1/2 ||P_Omega(G x U - R)||^2 + sum_i nu_i/2 trace(U_i^T (I - P_i P_i^T) U_i)``."""
    if residual is None:
        residual = sparse_residual(point, data.train)
    data_term = 0.5 * float(residual.values @ residual.values)
    fb = data.features
    reg = tuple(
        0.5 * fb.nu[k] * float(np.sum(fb.complement(k, U) ** 2)) if fb.nu[k] else 0.0
        for k, U in enumerate(point.factors)
    )
    return CostParts(data_term, reg, data_term + sum(reg))


def euclid_grad(point, data, residual=None):
    """Euclidean gradient of :func:`cost` as an ambient vector.

    With ``S = P_Omega(G x U - R)``::

        grad_G   = S x_0 U0^T x_1 U1^T x_2 U2^T
        grad_U_k = S_(k) (U_high kron U_low) G_(k)^T + nu_k (I - P_k P_k^T) U_k
    """
    S = residual if residual is not None else sparse_residual(point, data.train)
    U = point.factors
    fb = data.features
    factors = []
    for k in range(3):
        low, high = other_modes(k)
        Z = sparse_mat_kron(S, k, U[high], U[low]) @ matricize(point.core, k).T
        if fb.nu[k]:
            Z = Z + fb.nu[k] * fb.complement(k, U[k])
        factors.append(Z)
    return AmbientVector(sparse_core_product(S, *U), tuple(factors))


def riem_grad(ctx, point, data, egrad=None):
    """Riemannian gradient in the metric of ``ctx``: tangent projection of the scaled gradient."""
    if ctx.point is not point:
        raise ValueError("the metric context is anchored at a different point")
    if egrad is None:
        egrad = euclid_grad(point, data)
    return project_tangent(ctx, scaled_gradient(ctx, egrad))


def chordal_distance_sq(U, P, tol=1e-10):
    """``trace(U^T (I - P P^T) U) + (k - r)`` for orthonormal ``U`` (n x r) and ``P`` (n x k)."""
    U = np.asarray(U, dtype=float)
    P = np.asarray(P, dtype=float)
    for name, M in (("U", U), ("P", P)):
        if M.shape[1] and np.abs(M.T @ M - np.eye(M.shape[1])).max() > tol:
            raise ValueError(f"{name} does not have orthonormal columns")
    if U.shape[0] != P.shape[0]:
        raise ValueError("U and P must have the same number of rows")
    R = U - P @ (P.T @ U)
    return float(np.sum(R * U)) + (P.shape[1] - U.shape[1])


def make_context(point, data, metric="precond"):
    return MetricContext(point, data.features, metric)
