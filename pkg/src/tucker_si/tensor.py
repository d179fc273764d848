"""Dense third-order tensor kernels.

Tensors are plain ``float64`` numpy arrays of shape ``(n1, n2, n3)``. Modes are
0-based (0, 1, 2) throughout the library.

Matricization follows the Kolda-Bader convention: the mode-k unfolding sends
element ``(i1, i2, i3)`` to row ``i_k`` and to a column in which the
lower-numbered remaining mode varies fastest. Under this convention

    X_(0) = U0 G_(0) (U2 kron U1)^T

i.e. the Kronecker factor of the higher remaining mode comes first.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "matricize",
    "dematricize",
    "mode_product",
    "tucker_to_full",
    "inner",
    "frob_norm",
    "uf",
    "kron_apply",
    "sym",
    "skw",
    "other_modes",
    "RankDeficientError",
]


class RankDeficientError(np.linalg.LinAlgError):
    """Raised when a matrix expected to have full column rank does not."""


def _check_mode(k):
    if k not in (0, 1, 2):
        raise ValueError(f"mode index must be 0, 1 or 2, got {k!r}")


def _check_tensor(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise ValueError(f"expected a 3rd-order tensor, got ndim={X.ndim}")
    return X


def other_modes(k):
    """Return the two modes different from ``k`` as ``(low, high)``."""
    _check_mode(k)
    low, high = [m for m in (0, 1, 2) if m != k]
    return low, high


def matricize(X, k):
    """Mode-k unfolding of a 3rd-order tensor (Kolda-Bader column order)."""
    _check_mode(k)
    X = _check_tensor(X)
    return np.reshape(np.moveaxis(X, k, 0), (X.shape[k], -1), order="F")


def dematricize(M, k, dims):
    """Inverse of :func:`matricize`."""
    _check_mode(k)
    M = np.asarray(M, dtype=float)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise ValueError("dims must have three entries")
    rest = [dims[m] for m in (0, 1, 2) if m != k]
    if M.shape != (dims[k], rest[0] * rest[1]):
        raise ValueError(
            f"matrix of shape {M.shape} is not a mode-{k} unfolding of {dims}"
        )
    T = np.reshape(M, (dims[k], rest[0], rest[1]), order="F")
    return np.moveaxis(T, 0, k)


def mode_product(X, A, k):
    """Mode-k product ``X x_k A``, so that ``(X x_k A)_(k) = A X_(k)``."""
    _check_mode(k)
    X = _check_tensor(X)
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != X.shape[k]:
        raise ValueError(
            f"cannot multiply mode {k} of size {X.shape[k]} by matrix {A.shape}"
        )
    # tensordot puts the new axis last; move it back into place
    return np.moveaxis(np.tensordot(X, A, axes=([k], [1])), -1, k)


def tucker_to_full(G, U0, U1, U2):
    """Assemble ``G x_0 U0 x_1 U1 x_2 U2``."""
    G = _check_tensor(G)
    factors = [np.asarray(U, dtype=float) for U in (U0, U1, U2)]
    for k, U in enumerate(factors):
        if U.ndim != 2 or U.shape[1] != G.shape[k]:
            raise ValueError(
                f"factor {k} has shape {U.shape}, core mode size is {G.shape[k]}"
            )
    return np.einsum("abc,ia,jb,kc->ijk", G, *factors, optimize=True)


def inner(X, Y):
    """Sum of elementwise products of two equally shaped arrays."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    return float(np.vdot(X, Y))


def frob_norm(X):
    return float(np.sqrt(inner(X, X)))


def uf(A, rtol=None):
    """Orthonormal (polar) factor ``A (A^T A)^{-1/2}`` of a tall matrix.

    The polar factor is the closest matrix with orthonormal columns to ``A``
    and satisfies ``uf(A @ O) == uf(A) @ O`` for orthogonal ``O``.

    Raises
    ------
    RankDeficientError
        If ``A`` does not have numerically full column rank.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < A.shape[1]:
        raise ValueError(f"uf needs a tall matrix, got shape {A.shape}")
    if A.shape[1] == 0:
        return A.copy()
    W, s, Vt = np.linalg.svd(A, full_matrices=False)
    if rtol is None:
        rtol = max(A.shape) * np.finfo(float).eps
    if not np.all(np.isfinite(s)) or s[-1] <= rtol * s[0]:
        raise RankDeficientError(
            f"matrix is rank deficient (singular values {s[-1]:.3e} / {s[0]:.3e})"
        )
    return W @ Vt


def kron_apply(M, A, B):
    """Compute ``M @ kron(A, B)`` without forming the Kronecker product."""
    M = np.asarray(M, dtype=float)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if M.ndim != 2 or M.shape[1] != A.shape[0] * B.shape[0]:
        raise ValueError(
            f"M has {M.shape[1]} columns, kron(A, B) has "
            f"{A.shape[0] * B.shape[0]} rows"
        )
    T = M.reshape(M.shape[0], A.shape[0], B.shape[0])
    out = np.einsum("pab,ax,by->pxy", T, A, B, optimize=True)
    return out.reshape(M.shape[0], A.shape[1] * B.shape[1])


def sym(A):
    return 0.5 * (A + A.T)


def skw(A):
    return 0.5 * (A - A.T)
