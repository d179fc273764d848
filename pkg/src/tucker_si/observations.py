"""Observed-entry storage and kernels restricted to the observation set."""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .tensor import other_modes

__all__ = [
    "ObservationSet",
    "SparseTensor3",
    "tucker_entries_at",
    "sparse_residual",
    "sparse_mat_kron",
    "sparse_core_product",
    "rmse",
    "nrmse",
]


class ObservationSet:
    """Observed entries of an ``n1 x n2 x n3`` tensor in coordinate format.

    Indices are 0-based and kept in lexicographic order of ``(i1, i2, i3)``.
    Duplicate index triples are rejected.

    Parameters
    ----------
    dims : tuple of int
    indices : array_like of shape (m, 3)
    values : array_like of shape (m,)
    """

    def __init__(self, dims, indices, values, *, _trusted=False):
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"dims must be three positive integers, got {dims}")
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
        vals = np.asarray(values, dtype=float).reshape(-1)
        if idx.shape[0] != vals.shape[0]:
            raise ValueError(
                f"{idx.shape[0]} index triples but {vals.shape[0]} values"
            )
        if not _trusted:
            if idx.size and (idx.min() < 0 or np.any(idx >= np.array(dims))):
                raise IndexError("observation index out of range")
            if not np.all(np.isfinite(vals)):
                raise ValueError("observation values must be finite")
            lin = np.ravel_multi_index(idx.T, dims) if idx.size else idx[:, 0]
            order = np.argsort(lin, kind="stable")
            lin = lin[order]
            if lin.size > 1 and np.any(lin[1:] == lin[:-1]):
                dup = np.unravel_index(lin[1:][lin[1:] == lin[:-1]][0], dims)
                raise ValueError(f"duplicate observation index {tuple(map(int, dup))}")
            idx = idx[order]
            vals = vals[order]
        self.dims = dims
        self.indices = idx
        self.values = vals
        self.indices.setflags(write=False)
        self.values.setflags(write=False)

    @classmethod
    def from_dense(cls, X, indices):
        """Restrict a dense tensor to the given index triples."""
        X = np.asarray(X, dtype=float)
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
        return cls(X.shape, idx, X[idx[:, 0], idx[:, 1], idx[:, 2]])

    def __len__(self):
        return self.values.shape[0]

    def __repr__(self):
        return f"{type(self).__name__}(dims={self.dims}, nnz={len(self)})"

    @property
    def nnz(self):
        return len(self)

    @property
    def linear_indices(self):
        return np.ravel_multi_index(self.indices.T, self.dims)

    def with_values(self, values, cls=None):
        """Same index pattern with new values."""
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.shape[0] != len(self):
            raise ValueError("value count does not match the index pattern")
        cls = cls or type(self)
        return cls(self.dims, self.indices, values, _trusted=True)

    def to_dense(self):
        X = np.zeros(self.dims)
        X[self.indices[:, 0], self.indices[:, 1], self.indices[:, 2]] = self.values
        return X

    def __eq__(self, other):
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return (
            self.dims == other.dims
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


class SparseTensor3(ObservationSet):
    """A tensor that is zero outside its stored index set."""


def tucker_entries_at(G, U0, U1, U2, indices):
    """Entries of ``G x_0 U0 x_1 U1 x_2 U2`` at the given index triples."""
    G = np.asarray(G, dtype=float)
    idx = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
    factors = (U0, U1, U2)
    for k, U in enumerate(factors):
        if U.shape[1] != G.shape[k]:
            raise ValueError(f"factor {k} has {U.shape[1]} columns, core has {G.shape[k]}")
        if idx.size and (idx[:, k].min() < 0 or idx[:, k].max() >= U.shape[0]):
            raise IndexError(f"mode-{k} index out of range")
    A = U0[idx[:, 0]]
    B = U1[idx[:, 1]]
    C = U2[idx[:, 2]]
    T = A @ G.reshape(G.shape[0], -1)  # (m, r1*r2), C-order (b, c)
    T = T.reshape(-1, G.shape[1], G.shape[2])
    return np.einsum("mbc,mb,mc->m", T, B, C)


def sparse_residual(point, obs):
    """``P_Omega(tensor(point) - R)`` as a :class:`SparseTensor3`."""
    dims = tuple(U.shape[0] for U in point.factors)
    if dims != obs.dims:
        raise ValueError(f"point dims {dims} do not match observation dims {obs.dims}")
    pred = tucker_entries_at(point.core, *point.factors, obs.indices)
    return obs.with_values(pred - obs.values, cls=SparseTensor3)


def sparse_mat_kron(S, k, A, B):
    """``matricize(S, k) @ kron(A, B)`` computed entrywise over the stored entries.

    ``A`` must be indexed by the higher of the two remaining modes and ``B`` by
    the lower one, matching the column order of :func:`tensor.matricize`.
    """
    low, high = other_modes(k)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[0] != S.dims[high] or B.shape[0] != S.dims[low]:
        raise ValueError(
            f"mode {k}: expected A with {S.dims[high]} rows and B with "
            f"{S.dims[low]} rows, got {A.shape} and {B.shape}"
        )
    m = len(S)
    rows = (A[S.indices[:, high]][:, :, None] * B[S.indices[:, low]][:, None, :])
    rows = rows.reshape(m, A.shape[1] * B.shape[1])
    sel = sparse.csr_matrix(
        (S.values, (S.indices[:, k], np.arange(m))), shape=(S.dims[k], m)
    )
    return np.asarray(sel @ rows)


def sparse_core_product(S, U0, U1, U2):
    """``S x_0 U0^T x_1 U1^T x_2 U2^T`` for a sparse tensor ``S``."""
    A = U0[S.indices[:, 0]] * S.values[:, None]
    B = U1[S.indices[:, 1]]
    C = U2[S.indices[:, 2]]
    AB = (A[:, :, None] * B[:, None, :]).reshape(len(S), A.shape[1] * B.shape[1])
    return (AB.T @ C).reshape(U0.shape[1], U1.shape[1], U2.shape[1])


def rmse(predicted, actual):
    """Root mean squared error between two equally long value lists."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape:
        raise ValueError("predicted and actual must have equal length")
    if actual.size == 0:
        raise ValueError("rmse of an empty set is undefined")
    return float(np.sqrt(np.mean((predicted - actual) ** 2)))


def nrmse(point, obs):
    """RMSE of ``point`` on ``obs``, divided by the range of the observed values.

    Falls back to the plain RMSE when all observed values coincide.
    """
    if len(obs) == 0:
        raise ValueError("nrmse of an empty set is undefined")
    pred = tucker_entries_at(point.core, *point.factors, obs.indices)
    err = rmse(pred, obs.values)
    spread = float(obs.values.max() - obs.values.min())
    return err / spread if spread > 0 else err
