"""Covariance estimators for sums of Kronecker products.

Four estimators share one interface:

* ``sample``   -- the uncentered sample covariance ``(1/n) sum x_i x_i^T``;
* ``pls_soft`` -- nuclear-norm penalized permuted least squares: soft-threshold
  the singular values of the rearranged sample covariance by ``lam / 2`` and
  map back;
* ``pca_hard`` -- keep the top ``k`` singular triples of the rearranged sample
  covariance;
* ``rank_one`` -- ``kron(phi_hat, psi_hat) / mean ||x_i||^2`` built from the
  two partial second-moment matrices.

Each is available as a plain function returning an :class:`EstimateReport`
and as a scikit-learn compatible estimator (``fit(X)`` then
``covariance_``).
"""

from dataclasses import dataclass
from numbers import Integral

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_matrix, check_nonnegative, check_positive_int
from .exceptions import ContractError, DegenerateInputError, ShapeError
from .linalg import (
    _singular_values,
    frobenius_norm,
    kron,
    operator_norm,
    reconstruct,
    shrink_singular_values,
    svd,
    unvec,
)
from .rearrangement import BlockShape, _as_shape, rearrange, rearrange_inverse

__all__ = [
    "METHODS",
    "SampleSet",
    "EstimateReport",
    "sample_covariance",
    "pls_estimate",
    "hard_threshold_estimate",
    "rank_one_estimate",
    "lambda_grid",
    "default_lam0",
    "estimate",
    "select_lambda",
    "extract_factors",
    "SampleCovariance",
    "KroneckerPLS",
    "KroneckerPLSCV",
    "KroneckerPCA",
    "KroneckerRankOne",
]

METHODS = ("sample", "pls_soft", "pca_hard", "rank_one")


@dataclass(frozen=True, eq=False)
class SampleSet:
    """`n` observations of dimension `d`, stored row-wise, plus their seed."""

    vectors: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        x = check_matrix(self.vectors, "vectors")
        x.setflags(write=False)
        object.__setattr__(self, "vectors", x)

    @property
    def n(self):
        return self.vectors.shape[0]

    @property
    def d(self):
        return self.vectors.shape[1]


def _as_data(data):
    if isinstance(data, SampleSet):
        return data.vectors
    return check_matrix(data, "data")


@dataclass(frozen=True, eq=False)
class EstimateReport:
    """An estimated covariance together with its diagnostics.

    `singular_values` are those of the rearranged sample covariance, before
    any shrinkage; `effective_rank_estimate` counts the components the
    estimator kept. Error fields are filled only when the truth is known.
    """

    estimate: np.ndarray
    method: str
    n: int
    singular_values: np.ndarray
    effective_rank_estimate: int
    lambda_used: float | None = None
    frobenius_error: float | None = None
    operator_error: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractError(f"unknown method {self.method!r}")
        if (self.lambda_used is not None) != (self.method == "pls_soft"):
            raise ContractError("lambda_used is set exactly for the pls_soft method")

    @property
    def symmetry_residual(self):
        """``||E - E^T||_F / ||E||_F`` of the estimate (0 for the zero matrix)."""
        scale = frobenius_norm(self.estimate)
        if scale == 0:
            return 0.0
        return frobenius_norm(self.estimate - self.estimate.T) / scale

    def with_truth(self, sigma):
        """Copy of the report with error norms against `sigma` filled in."""
        diff = self.estimate - check_matrix(sigma, "sigma")
        return EstimateReport(
            estimate=self.estimate,
            method=self.method,
            n=self.n,
            singular_values=self.singular_values,
            effective_rank_estimate=self.effective_rank_estimate,
            lambda_used=self.lambda_used,
            frobenius_error=frobenius_norm(diff),
            operator_error=operator_norm(diff),
        )

    def to_dict(self):
        return {
            "method": self.method,
            "n": int(self.n),
            "d": int(self.estimate.shape[0]),
            "lambda_used": self.lambda_used,
            "effective_rank_estimate": int(self.effective_rank_estimate),
            "singular_values": [float(s) for s in self.singular_values],
            "symmetry_residual": self.symmetry_residual,
            "frobenius_error": self.frobenius_error,
            "operator_error": self.operator_error,
        }


def sample_covariance(data):
    """``(1/n) sum_i x_i x_i^T`` with no mean subtraction."""
    x = _as_data(data)
    n = x.shape[0]
    # x.T @ x dispatches to a symmetric rank-k update, so the result is exactly symmetric
    return (x.T @ x) / n


def _check_dims(x, shape):
    if x.shape[1] != shape.d:
        raise ShapeError(
            f"data has dimension {x.shape[1]} but p*q = {shape.p}*{shape.q} = {shape.d}"
        )


def _numerical_rank(values):
    if values.size == 0 or values[0] == 0:
        return 0
    return int(np.sum(values > values[0] * max(values.size, 1) * np.finfo(float).eps))


def _finish(report, truth):
    return report if truth is None else report.with_truth(truth)


def _pls_from_cov(cov, shape, lam):
    r = rearrange(cov, shape)
    if lam == 0:
        values = _singular_values(r)
        return cov.copy(), values, _numerical_rank(values)
    decomp = svd(r)
    shrunk = shrink_singular_values(decomp.singular_values, lam)
    estimate = rearrange_inverse(reconstruct(decomp, shrunk), shape)
    return estimate, decomp.singular_values, int(np.count_nonzero(shrunk))


def pls_estimate(data, shape, lam, truth=None):
    """Nuclear-norm penalized permuted least squares estimate.

    Solves ``min_R ||R - R(S)||_F^2 + lam ||R||_*`` in closed form by
    soft-thresholding the singular values of the rearranged sample covariance
    ``R(S)`` at ``lam / 2``, then maps the minimizer back with the inverse
    rearrangement. ``lam = 0`` returns the sample covariance itself.

    Parameters
    ----------
    data : SampleSet or array-like of shape (n, p*q)
    shape : BlockShape or (p, q)
    lam : float >= 0
    truth : array-like of shape (p*q, p*q), optional
        When given, error norms against it are stored in the report.
    """
    shape = _as_shape(shape)
    x = _as_data(data)
    _check_dims(x, shape)
    lam = check_nonnegative(lam, "lam")
    estimate, values, kept = _pls_from_cov(sample_covariance(x), shape, lam)
    report = EstimateReport(estimate, "pls_soft", x.shape[0], values, kept, lambda_used=lam)
    return _finish(report, truth)


def hard_threshold_estimate(data, shape, k, truth=None):
    """Keep the top `k` singular triples of the rearranged sample covariance."""
    shape = _as_shape(shape)
    x = _as_data(data)
    _check_dims(x, shape)
    top = min(shape.p**2, shape.q**2)
    if isinstance(k, bool) or not isinstance(k, Integral) or not 1 <= k <= top:
        raise ContractError(f"k must be an integer in [1, {top}], got {k!r}")
    cov = sample_covariance(x)
    r = rearrange(cov, shape)
    if k == top:
        values = _singular_values(r)
        estimate = cov.copy()
    else:
        decomp = svd(r)
        values = decomp.singular_values
        kept = values.copy()
        kept[k:] = 0.0
        estimate = rearrange_inverse(reconstruct(decomp, kept), shape)
    report = EstimateReport(estimate, "pca_hard", x.shape[0], values, int(k))
    return _finish(report, truth)


def rank_one_estimate(data, shape, truth=None):
    """``kron(phi_hat, psi_hat) / mean ||x_i||^2``.

    With ``X_i`` the ``q x p`` matrix whose columns stack to ``x_i``,
    ``phi_hat = mean X_i^T X_i`` and ``psi_hat = mean X_i X_i^T``.

    Raises
    ------
    DegenerateInputError
        If every observation is zero.
    """
    shape = _as_shape(shape)
    x = _as_data(data)
    _check_dims(x, shape)
    n = x.shape[0]
    # rows of blocks[i] are the columns of X_i, i.e. blocks[i] == X_i^T
    blocks = x.reshape(n, shape.p, shape.q)
    phi = np.einsum("nab,ncb->ac", blocks, blocks) / n
    psi = np.einsum("nab,nac->bc", blocks, blocks) / n
    normalizer = float(np.sum(x * x)) / n
    if normalizer <= 0:
        raise DegenerateInputError("all observations are zero")
    estimate = kron(phi, psi) / normalizer
    values = _singular_values(rearrange(sample_covariance(x), shape))
    report = EstimateReport(estimate, "rank_one", n, values, 1)
    return _finish(report, truth)


def _sample_only(data, shape, truth=None):
    shape = _as_shape(shape)
    x = _as_data(data)
    _check_dims(x, shape)
    cov = sample_covariance(x)
    values = _singular_values(rearrange(cov, shape))
    report = EstimateReport(cov, "sample", x.shape[0], values, _numerical_rank(values))
    return _finish(report, truth)


def estimate(data, shape, method, *, lam=None, k=None, truth=None):
    """Dispatch to the estimator named by `method` (one of :data:`METHODS`)."""
    if method == "sample":
        return _sample_only(data, shape, truth)
    if method == "pls_soft":
        if lam is None:
            raise ContractError("pls_soft needs a penalty lam")
        return pls_estimate(data, shape, lam, truth)
    if method == "pca_hard":
        if k is None:
            raise ContractError("pca_hard needs a component count k")
        return hard_threshold_estimate(data, shape, k, truth)
    if method == "rank_one":
        return rank_one_estimate(data, shape, truth)
    raise ContractError(f"unknown method {method!r}; expected one of {METHODS}")


def lambda_grid(lam0, m):
    """``lam0 * 2**-j`` for ``j = 0..m`` (descending)."""
    if not lam0 > 0:
        raise ContractError(f"lam0 must be positive, got {lam0}")
    m = check_positive_int(m, "m", minimum=0)
    return lam0 * 2.0 ** -np.arange(m + 1)


def default_lam0(data, shape):
    """``2 * sigma_1`` of the rearranged sample covariance: the smallest
    penalty that shrinks everything to zero.

    Rounded up by a relative 1e-12, since the values-only and full SVD
    routines may disagree on ``sigma_1`` in the last bits.
    """
    shape = _as_shape(shape)
    x = _as_data(data)
    _check_dims(x, shape)
    top = _singular_values(rearrange(sample_covariance(x), shape))[0]
    return 2.0 * float(top) * (1 + 1e-12) if top > 0 else 1.0


def _split_scores(x, shape, grid, split_fraction, rng):
    n = x.shape[0]
    n_fit = min(max(int(round(split_fraction * n)), 1), n - 1)
    order = rng.permutation(n)
    fit, val = x[order[:n_fit]], x[order[n_fit:]]
    decomp = svd(rearrange(sample_covariance(fit), shape))
    target = rearrange(sample_covariance(val), shape)
    # ||U diag(t) V^T - T||^2 = ||T||^2 - 2 sum_j t_j u_j^T T v_j + sum_j t_j^2
    proj = np.einsum("ij,ik,kj->j", decomp.left_vectors, target, decomp.right_vectors)
    base = float(np.sum(target * target))
    scores = np.empty(len(grid))
    for i, lam in enumerate(grid):
        t = shrink_singular_values(decomp.singular_values, lam)
        scores[i] = base - 2.0 * float(t @ proj) + float(t @ t)
    return scores


def select_lambda(data, shape, grid, split_fraction=0.5, repetitions=5, seed=0):
    """Choose the penalty by repeated random splitting.

    For each repetition the sample is shuffled and cut into a fitting part
    (a fraction `split_fraction` of the observations) and a validation part.
    A penalty scores ``||R(pls fit) - R(S_validation)||_F^2``; scores are
    averaged over repetitions and the minimizer is returned. Exact ties go to
    the larger penalty.

    Parameters
    ----------
    grid : sequence of float
        Strictly positive, sorted in descending order.
    seed : int
        Repetition ``r`` draws its split from the stream ``(seed, r)``.

    Returns
    -------
    lam : float
    scores : ndarray, one averaged score per grid entry
    """
    shape = _as_shape(shape)
    x = _as_data(data)
    _check_dims(x, shape)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ContractError("lambda grid must be a non-empty sequence")
    if not np.all(np.isfinite(grid)) or np.any(grid <= 0):
        raise ContractError("lambda grid entries must be finite and positive")
    if np.any(np.diff(grid) > 0):
        raise ContractError("lambda grid must be sorted in descending order")
    if not 0 < split_fraction < 1:
        raise ContractError(f"split_fraction must lie in (0, 1), got {split_fraction}")
    repetitions = check_positive_int(repetitions, "repetitions")
    if grid.size == 1:
        return float(grid[0]), np.zeros(1)
    if x.shape[0] < 2:
        raise ContractError("random splitting needs at least two observations")
    total = np.zeros(grid.size)
    for rep in range(repetitions):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))
        total += _split_scores(x, shape, grid, split_fraction, rng)
    scores = total / repetitions
    # argmin keeps the first minimum, i.e. the largest penalty among ties
    best = int(np.argmin(scores))
    return float(grid[best]), scores


def extract_factors(report, shape, k, psd=False):
    """Recover Kronecker factor pairs from an estimate.

    The j-th singular triple ``(s, u, v)`` of the rearranged estimate gives
    ``phi = sym(unvec(sqrt(s) u))`` and ``psi = sym(unvec(sqrt(s) v))`` with
    ``sym(M) = (M + M^T) / 2``; the pair's sign is chosen so that
    ``trace(phi) >= 0``. With ``psd=True`` negative eigenvalues of each
    factor are clipped to zero.

    Returns
    -------
    factors : list of (phi, psi)
    residual : float
        ``||sum_j kron(phi_j, psi_j) - estimate||_F``.
    """
    shape = _as_shape(shape)
    if isinstance(k, bool) or not isinstance(k, Integral) or k < 0:
        raise ContractError(f"k must be a non-negative integer, got {k!r}")
    if k > report.effective_rank_estimate:
        raise ContractError(
            f"k={k} exceeds the {report.effective_rank_estimate} retained components"
        )
    est = report.estimate
    if k == 0:
        return [], frobenius_norm(est)
    decomp = svd(rearrange(est, shape))
    factors = []
    for j in range(k):
        root = np.sqrt(decomp.singular_values[j])
        phi = unvec(root * decomp.left_vectors[:, j], shape.p, shape.p)
        psi = unvec(root * decomp.right_vectors[:, j], shape.q, shape.q)
        phi, psi = (phi + phi.T) / 2, (psi + psi.T) / 2
        if np.trace(phi) < 0:
            phi, psi = -phi, -psi
        if psd:
            phi, psi = _clip_psd(phi), _clip_psd(psi)
        factors.append((phi, psi))
    rebuilt = sum(kron(phi, psi) for phi, psi in factors)
    return factors, frobenius_norm(rebuilt - est)


def _clip_psd(m):
    w, v = np.linalg.eigh(m)
    out = (v * np.maximum(w, 0.0)) @ v.T
    return (out + out.T) / 2


# ---------------------------------------------------------------------------
# scikit-learn style estimators


class _KroneckerCovariance(BaseEstimator):
    """Shared plumbing: input checks, stored report, error norms."""

    def _validate_X(self, X):
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        self.n_features_in_ = X.shape[1]
        return X

    def _shape(self):
        return BlockShape(self.p, self.q)

    def _store(self, report):
        self.report_ = report
        self.covariance_ = report.estimate
        return self

    def error_norm(self, comp_cov, norm="frobenius", squared=False):
        """Distance between `comp_cov` and the fitted covariance.

        Parameters
        ----------
        norm : {"frobenius", "spectral"}
        squared : bool
            Return the squared norm.
        """
        check_is_fitted(self, "covariance_")
        diff = self.covariance_ - check_matrix(comp_cov, "comp_cov", square=True)
        if norm == "frobenius":
            err = frobenius_norm(diff)
        elif norm == "spectral":
            err = operator_norm(diff)
        else:
            raise ValueError("norm must be 'frobenius' or 'spectral'")
        return err * err if squared else err

    def factors(self, k=None, psd=False):
        """Kronecker factor pairs of the fitted estimate (see :func:`extract_factors`)."""
        check_is_fitted(self, "report_")
        if k is None:
            k = self.report_.effective_rank_estimate
        return extract_factors(self.report_, self._shape(), k, psd=psd)[0]


class SampleCovariance(_KroneckerCovariance):
    """Uncentered sample covariance, for comparison with the structured fits.

    Parameters
    ----------
    p, q : int
        Block shape used only for the diagnostic spectrum in ``report_``.
    """

    def __init__(self, p=1, q=1):
        self.p = p
        self.q = q

    def fit(self, X, y=None):
        X = self._validate_X(X)
        return self._store(_sample_only(X, self._shape()))


class KroneckerPLS(_KroneckerCovariance):
    """Nuclear-norm penalized permuted least squares covariance estimator.

    Parameters
    ----------
    p, q : int
        The estimate is a sum of ``kron(phi, psi)`` with ``phi`` of size
        ``p x p`` and ``psi`` of size ``q x q``; ``p * q`` must equal the
        number of features.
    lam : float, default=0.0
        Nuclear-norm penalty. Singular values of the rearranged sample
        covariance are reduced by ``lam / 2``.

    Attributes
    ----------
    covariance_ : ndarray of shape (p*q, p*q)
    report_ : EstimateReport
    n_features_in_ : int

    Examples
    --------
    >>> import numpy as np
    >>> X = np.random.default_rng(0).standard_normal((200, 4))
    >>> est = KroneckerPLS(p=2, q=2, lam=0.1).fit(X)
    >>> est.covariance_.shape
    (4, 4)
    """

    def __init__(self, p=1, q=1, lam=0.0):
        self.p = p
        self.q = q
        self.lam = lam

    def fit(self, X, y=None):
        X = self._validate_X(X)
        return self._store(pls_estimate(X, self._shape(), self.lam))


class KroneckerPLSCV(_KroneckerCovariance):
    """:class:`KroneckerPLS` with the penalty picked by random splitting.

    The candidates are ``lam0 * 2**-j`` for ``j = 0..n_halvings``. When
    `lam0` is None it defaults to twice the top singular value of the
    rearranged sample covariance, the point where the fit becomes zero.

    Attributes
    ----------
    lam_ : float
        Selected penalty.
    lambdas_ : ndarray
        Candidate grid (descending).
    cv_scores_ : ndarray
        Mean validation score per candidate.
    """

    def __init__(
        self,
        p=1,
        q=1,
        lam0=None,
        n_halvings=16,
        split_fraction=0.5,
        repetitions=5,
        random_state=0,
    ):
        self.p = p
        self.q = q
        self.lam0 = lam0
        self.n_halvings = n_halvings
        self.split_fraction = split_fraction
        self.repetitions = repetitions
        self.random_state = random_state

    def fit(self, X, y=None):
        X = self._validate_X(X)
        shape = self._shape()
        lam0 = self.lam0 if self.lam0 is not None else default_lam0(X, shape)
        self.lambdas_ = lambda_grid(lam0, self.n_halvings)
        self.lam_, self.cv_scores_ = select_lambda(
            X,
            shape,
            self.lambdas_,
            split_fraction=self.split_fraction,
            repetitions=self.repetitions,
            seed=self.random_state,
        )
        return self._store(pls_estimate(X, shape, self.lam_))


class KroneckerPCA(_KroneckerCovariance):
    """Hard-threshold estimator keeping `n_components` Kronecker terms."""

    def __init__(self, p=1, q=1, n_components=1):
        self.p = p
        self.q = q
        self.n_components = n_components

    def fit(self, X, y=None):
        X = self._validate_X(X)
        return self._store(hard_threshold_estimate(X, self._shape(), self.n_components))


class KroneckerRankOne(_KroneckerCovariance):
    """Single-Kronecker-product estimator from partial second moments."""

    def __init__(self, p=1, q=1):
        self.p = p
        self.q = q

    def fit(self, X, y=None):
        X = self._validate_X(X)
        return self._store(rank_one_estimate(X, self._shape()))
