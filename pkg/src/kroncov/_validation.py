"""Input validation helpers shared by the public functions and estimators."""

import numbers

import numpy as np

from .exceptions import ContractError, ShapeError


def check_matrix(m, name="matrix", *, square=False):
    """Return `m` as a finite 2-D float64 array.

    Raises
    ------
    ShapeError
        If `m` is not 2-D, is empty, or is not square when `square` is set.
    ValueError
        If `m` holds NaN or infinite entries.
    """
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be non-empty, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return arr


def check_vector(v, name="vector"):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return arr


def check_positive_int(value, name, *, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ContractError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ContractError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_nonnegative(value, name):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ContractError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ContractError(f"{name} must be finite and >= 0, got {value}")
    return value


def check_symmetric(m, name="matrix", *, tol=1e-10):
    """Raise `ContractError` when `m` is asymmetric beyond `tol` (relative)."""
    scale = max(np.max(np.abs(m)), 1.0)
    asym = np.max(np.abs(m - m.T)) if m.size else 0.0
    if asym > tol * scale:
        raise ContractError(
            f"{name} is not symmetric: max |m - m.T| = {asym:.3e}"
        )
