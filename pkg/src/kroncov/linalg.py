"""Dense real linear-algebra kernels.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Internally
they are stored in numpy's default row-major layout; every public contract
is stated in terms of indices, so the layout never leaks out.

``vec`` stacks columns (column-major flattening), matching the convention
used throughout the estimators: ``vec(m)[j * rows + i] == m[i, j]``.
"""

from typing import NamedTuple

import numpy as np
import scipy.linalg

from ._validation import (
    check_matrix,
    check_nonnegative,
    check_symmetric,
    check_vector,
)
from .exceptions import ContractError, NumericalError, ShapeError, SizeError

__all__ = [
    "Svd",
    "kron",
    "vec",
    "unvec",
    "frobenius_norm",
    "operator_norm",
    "nuclear_norm",
    "trace",
    "svd",
    "symmetric_eigendecomposition",
    "soft_threshold_svd",
    "hard_threshold_svd",
    "shrink_singular_values",
    "reconstruct",
]

# 2**31 float64 entries is 16 GiB; anything above is a caller error.
MAX_ENTRIES = 2**31


class Svd(NamedTuple):
    """Thin singular value decomposition ``m = U diag(s) V^T``.

    `left_vectors` and `right_vectors` hold the singular vectors as columns
    (``right_vectors`` is V, not V^T).
    """

    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray


def kron(a, b):
    """Kronecker product; block ``(i, j)`` of the result is ``a[i, j] * b``."""
    a = check_matrix(a, "a")
    b = check_matrix(b, "b")
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if rows * cols > MAX_ENTRIES:
        raise SizeError(
            f"kron output {rows}x{cols} exceeds {MAX_ENTRIES} entries"
        )
    return np.kron(a, b)


def vec(m):
    """Stack the columns of `m` into a 1-D array."""
    m = check_matrix(m, "m")
    return m.ravel(order="F").copy()


def unvec(v, rows, cols):
    """Inverse of :func:`vec`: refill a ``rows x cols`` matrix column by column."""
    v = check_vector(v, "v")
    if v.size != rows * cols:
        raise ShapeError(
            f"cannot reshape vector of length {v.size} into {rows}x{cols}"
        )
    return v.reshape((cols, rows)).T.copy()


def frobenius_norm(m):
    m = check_matrix(m, "m")
    return float(np.sqrt(np.sum(m * m)))


def operator_norm(m):
    """Largest singular value."""
    m = check_matrix(m, "m")
    return float(_singular_values(m)[0])


def nuclear_norm(m):
    """Sum of singular values."""
    m = check_matrix(m, "m")
    return float(np.sum(_singular_values(m)))


def trace(m):
    m = check_matrix(m, "m", square=True)
    return float(np.trace(m))


def _singular_values(m):
    try:
        return scipy.linalg.svdvals(m, check_finite=False)
    except np.linalg.LinAlgError:
        return svd(m).singular_values


def _fix_signs(u, vt):
    # first entry of each left vector that is not numerically zero is made positive
    mag = np.abs(u)
    thresh = 1e-12 * np.maximum(mag.max(axis=0, initial=0.0), 1e-300)
    first = np.argmax(mag > thresh, axis=0)
    signs = np.sign(u[first, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, vt * signs[:, None]


def svd(m):
    """Thin SVD with singular values sorted non-increasingly.

    LAPACK's divide-and-conquer driver (``gesdd``) is tried first; if it
    reports non-convergence the QR-iteration driver (``gesvd``, capped by
    LAPACK at ``6 * min(rows, cols)**2`` inner sweeps) is used instead.

    Each left vector is signed so that its first non-negligible entry is
    positive, which makes the factors reproducible. Vectors belonging to
    repeated singular values are returned in the order LAPACK produced them.

    Raises
    ------
    NumericalError
        If both drivers fail to converge.
    """
    m = check_matrix(m, "m")
    try:
        u, s, vt = scipy.linalg.svd(
            m, full_matrices=False, check_finite=False, lapack_driver="gesdd"
        )
    except np.linalg.LinAlgError:
        try:
            u, s, vt = scipy.linalg.svd(
                m, full_matrices=False, check_finite=False, lapack_driver="gesvd"
            )
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"SVD of {m.shape[0]}x{m.shape[1]} matrix did not converge: {exc}",
                residual=float("nan"),
            ) from exc
    order = np.argsort(-s, kind="stable")
    u, s, vt = u[:, order], s[order], vt[order]
    u, vt = _fix_signs(u, vt)
    return Svd(u, s, vt.T)


def reconstruct(decomp, values=None):
    """Rebuild ``U diag(values) V^T`` from an :class:`Svd`."""
    s = decomp.singular_values if values is None else np.asarray(values)
    keep = s != 0
    u = decomp.left_vectors[:, keep]
    v = decomp.right_vectors[:, keep]
    return (u * s[keep]) @ v.T


def symmetric_eigendecomposition(m):
    """Eigenvalues (non-increasing) and orthonormal eigenvectors of symmetric `m`.

    Raises
    ------
    ContractError
        If `m` is asymmetric beyond 1e-10 relative to its largest entry.
    """
    m = check_matrix(m, "m", square=True)
    check_symmetric(m, "m")
    sym = (m + m.T) / 2
    w, v = scipy.linalg.eigh(sym, check_finite=False)
    return w[::-1].copy(), v[:, ::-1].copy()


def shrink_singular_values(values, lam):
    """``max(s - lam / 2, 0)`` applied elementwise."""
    return np.maximum(np.asarray(values) - lam / 2.0, 0.0)


def soft_threshold_svd(m, lam):
    """Proximal map of ``lam * ||.||_*`` under ``||R - m||_F^2``.

    Returns ``sum_j max(s_j - lam/2, 0) u_j v_j^T``, the unique minimizer of
    ``||R - m||_F^2 + lam * ||R||_*``. A zero penalty returns an exact copy.
    """
    m = check_matrix(m, "m")
    lam = check_nonnegative(lam, "lam")
    if lam == 0:
        return m.copy()
    decomp = svd(m)
    return reconstruct(decomp, shrink_singular_values(decomp.singular_values, lam))


def hard_threshold_svd(m, k):
    """Best rank-`k` Frobenius approximation: the top `k` singular triples."""
    m = check_matrix(m, "m")
    r = min(m.shape)
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or not 0 <= k <= r:
        raise ContractError(f"k must be an integer in [0, {r}], got {k!r}")
    if k == 0:
        return np.zeros_like(m)
    if k == r:
        return m.copy()
    decomp = svd(m)
    values = decomp.singular_values.copy()
    values[k:] = 0.0
    return reconstruct(decomp, values)
