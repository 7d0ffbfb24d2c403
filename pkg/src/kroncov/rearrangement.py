"""The rearrangement operator and its inverse.

For a ``pq x pq`` matrix ``M`` split into ``q x q`` blocks ``M(i, j)``
(``i, j = 1..p``), the rearranged matrix is ``p^2 x q^2`` and its row
``(j - 1) p + i`` is ``vec(M(i, j))``. It is a Frobenius isometry that maps
``A kron B`` to the rank-one matrix ``vec(A) vec(B)^T``, so a covariance of
Kronecker rank K becomes a matrix of ordinary rank K.

Index translation (0-based, used in the code): with ``M[i*q + a, j*q + b]``
the entry ``a, b`` of block ``(i, j)``, the rearranged entry is at row
``j*p + i`` and column ``b*q + a``.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_matrix
from .exceptions import ContractError, ShapeError
from .linalg import operator_norm

__all__ = [
    "BlockShape",
    "rearrange",
    "rearrange_inverse",
    "rearranged_deviation_norm",
]


@dataclass(frozen=True)
class BlockShape:
    """Block grid of a ``d x d`` matrix with ``d = p * q``.

    `p` is the number of block rows (and the size of the first Kronecker
    factor); `q` is the size of each block (and of the second factor).
    """

    p: int
    q: int

    def __post_init__(self):
        for name in ("p", "q"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ContractError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise ContractError(f"{name} must be >= 1, got {value}")
            object.__setattr__(self, name, int(value))

    @property
    def d(self):
        return self.p * self.q

    @property
    def rearranged_shape(self):
        return (self.p * self.p, self.q * self.q)


def _as_shape(shape):
    if isinstance(shape, BlockShape):
        return shape
    p, q = shape
    return BlockShape(p, q)


def rearrange(m, shape):
    """Map a ``pq x pq`` matrix to its ``p^2 x q^2`` rearrangement.

    Parameters
    ----------
    m : array-like of shape (p*q, p*q)
    shape : BlockShape or (p, q)

    Returns
    -------
    ndarray of shape (p**2, q**2)
    """
    shape = _as_shape(shape)
    m = check_matrix(m, "m")
    if m.shape != (shape.d, shape.d):
        raise ShapeError(
            f"expected a {shape.d}x{shape.d} matrix for p={shape.p}, q={shape.q}, "
            f"got {m.shape[0]}x{m.shape[1]}"
        )
    p, q = shape.p, shape.q
    # axes (i, a, j, b) -> (j, i, b, a)
    return m.reshape(p, q, p, q).transpose(2, 0, 3, 1).reshape(p * p, q * q)


def rearrange_inverse(r, shape):
    """Inverse of :func:`rearrange`; a pure index permutation."""
    shape = _as_shape(shape)
    r = check_matrix(r, "r")
    if r.shape != shape.rearranged_shape:
        raise ShapeError(
            f"expected a {shape.p ** 2}x{shape.q ** 2} matrix for p={shape.p}, "
            f"q={shape.q}, got {r.shape[0]}x{r.shape[1]}"
        )
    p, q = shape.p, shape.q
    # axes (j, i, b, a) -> (i, a, j, b)
    return r.reshape(p, p, q, q).transpose(1, 3, 0, 2).reshape(p * q, p * q)


def rearranged_deviation_norm(sample_cov, sigma, shape):
    """Operator norm of the rearranged deviation ``R(sample_cov - sigma)``."""
    shape = _as_shape(shape)
    sample_cov = check_matrix(sample_cov, "sample_cov")
    sigma = check_matrix(sigma, "sigma")
    if sample_cov.shape != sigma.shape:
        raise ShapeError(
            f"sample_cov {sample_cov.shape} and sigma {sigma.shape} differ in shape"
        )
    return operator_norm(rearrange(sample_cov - sigma, shape))
