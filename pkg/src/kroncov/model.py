"""Ground-truth models, the matrix-model sampler and the theoretical bounds.

A covariance of Kronecker rank K is ``sum_j kron(phi_j, psi_j)`` with
``phi_j`` of size ``p x p`` and ``psi_j`` of size ``q x q``. Data are
drawn through the matrix model ``X = sum_j B_j Y_j A_j^T`` (``Y_j`` a
``q x p`` standard Gaussian matrix), whose vectorization has covariance
``sum_j kron(A_j A_j^T, B_j B_j^T)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from ._validation import check_matrix, check_positive_int, check_symmetric
from .exceptions import ContractError, DegenerateInputError
from .estimators import SampleSet
from .linalg import kron, operator_norm, symmetric_eigendecomposition
from .rearrangement import BlockShape, _as_shape

__all__ = [
    "KronSumCovariance",
    "MatrixModel",
    "BoundInputs",
    "assemble_sigma",
    "random_psd_factor",
    "random_kron_sum",
    "sample_matrix_model",
    "factorize_for_sampling",
    "psd_sqrt",
    "effective_rank",
    "lemma1_bound",
    "theorem1_lambda",
    "theorem1_error_bound",
    "delta_condition_lhs",
    "delta_condition_holds",
    "baseline_bound_rate",
]

NOISE_KINDS = ("gaussian",)


def _check_psd_factor(m, label):
    m = check_matrix(m, label, square=True)
    check_symmetric(m, label)
    w = np.linalg.eigvalsh((m + m.T) / 2)
    tr = float(np.trace(m))
    if w[0] < -1e-10 * max(abs(tr), 1e-300):
        raise ContractError(
            f"{label} is not positive semidefinite: smallest eigenvalue {w[0]:.6e}"
        )
    return m


@dataclass(frozen=True)
class KronSumCovariance:
    """``Sigma = sum_j kron(phi_j, psi_j)`` with symmetric PSD factors."""

    shape: BlockShape
    factors: tuple

    def __post_init__(self):
        shape = _as_shape(self.shape)
        object.__setattr__(self, "shape", shape)
        checked = []
        for j, pair in enumerate(self.factors):
            phi, psi = pair
            phi = _check_psd_factor(phi, f"phi[{j}]")
            psi = _check_psd_factor(psi, f"psi[{j}]")
            if phi.shape != (shape.p, shape.p):
                raise ContractError(f"phi[{j}] must be {shape.p}x{shape.p}, got {phi.shape}")
            if psi.shape != (shape.q, shape.q):
                raise ContractError(f"psi[{j}] must be {shape.q}x{shape.q}, got {psi.shape}")
            checked.append((phi, psi))
        if not checked:
            raise ContractError("a Kronecker-sum covariance needs at least one term")
        object.__setattr__(self, "factors", tuple(checked))

    @property
    def k(self):
        return len(self.factors)

    def bound_inputs(self, omega, n, delta):
        return BoundInputs.from_covariance(self, omega=omega, n=n, delta=delta)


@dataclass(frozen=True)
class MatrixModel:
    """``X = sum_j b_j Y_j a_j^T`` with independent noise matrices ``Y_j``."""

    shape: BlockShape
    terms: tuple
    noise: str = "gaussian"

    def __post_init__(self):
        shape = _as_shape(self.shape)
        object.__setattr__(self, "shape", shape)
        if self.noise not in NOISE_KINDS:
            raise ContractError(f"unknown noise kind {self.noise!r}; have {NOISE_KINDS}")
        terms = []
        for j, (a, b) in enumerate(self.terms):
            a = check_matrix(a, f"a[{j}]", square=True)
            b = check_matrix(b, f"b[{j}]", square=True)
            if a.shape[0] != shape.p or b.shape[0] != shape.q:
                raise ContractError(
                    f"term {j}: a must be {shape.p}x{shape.p} and b {shape.q}x{shape.q}"
                )
            terms.append((a, b))
        if not terms:
            raise ContractError("a matrix model needs at least one term")
        object.__setattr__(self, "terms", tuple(terms))

    def covariance(self):
        """Exact population covariance ``sum_j kron(a a^T, b b^T)``."""
        return sum(kron(a @ a.T, b @ b.T) for a, b in self.terms)


def assemble_sigma(model):
    """Dense ``d x d`` matrix ``sum_j kron(phi_j, psi_j)``."""
    sigma = sum(kron(phi, psi) for phi, psi in model.factors)
    return (sigma + sigma.T) / 2


def _haar_orthogonal(dim, rng):
    g = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def _geometric_spectrum(dim, target):
    if target >= dim:
        return np.ones(dim)
    if target <= 1:
        out = np.zeros(dim)
        out[0] = 1.0
        return out

    def excess(rho):
        return np.sum(rho ** np.arange(dim)) - target

    rho = scipy.optimize.brentq(excess, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
    return rho ** np.arange(dim)


def _polynomial_spectrum(dim, target):
    if target >= dim:
        return np.ones(dim)
    idx = np.arange(1, dim + 1, dtype=np.float64)

    def excess(alpha):
        return np.sum(idx ** -alpha) - target

    hi = 200.0
    if excess(hi) > 0:
        raise ContractError(
            f"effective rank {target} is below what a polynomial spectrum reaches"
        )
    alpha = scipy.optimize.brentq(excess, 0.0, hi, xtol=1e-14)
    return idx ** -alpha


def random_psd_factor(dim, target_effective_rank, seed=None, spectrum="geometric"):
    """Random symmetric PSD matrix with a prescribed effective rank.

    The eigenvalues decay geometrically (``rho**i``, i = 0..dim-1) or
    polynomially (``(i+1)**-alpha``) with the rate solved so that
    ``trace / largest eigenvalue`` hits the target; the eigenbasis is a
    seeded Haar-random rotation. The top eigenvalue is always 1.

    Raises
    ------
    ContractError
        If the target lies outside ``[1, dim]`` or the spectrum family cannot
        reach it.
    """
    dim = check_positive_int(dim, "dim")
    target = float(target_effective_rank)
    if not 1.0 <= target <= dim:
        raise ContractError(f"target effective rank must lie in [1, {dim}], got {target}")
    if spectrum == "geometric":
        values = _geometric_spectrum(dim, target)
    elif spectrum == "polynomial":
        values = _polynomial_spectrum(dim, target)
    else:
        raise ContractError(f"unknown spectrum {spectrum!r}")
    if np.all(values == 1.0):
        return np.eye(dim)
    rng = np.random.default_rng(seed)
    q = _haar_orthogonal(dim, rng)
    m = (q * values) @ q.T
    return (m + m.T) / 2


def random_kron_sum(shape, phi_ranks, psi_ranks, seed=None, spectrum="geometric"):
    """K-term model with random factors of the given effective ranks."""
    shape = _as_shape(shape)
    if len(phi_ranks) != len(psi_ranks):
        raise ContractError("phi_ranks and psi_ranks must have the same length")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(2 * len(phi_ranks))
    factors = []
    for j, (rp, rq) in enumerate(zip(phi_ranks, psi_ranks)):
        phi = random_psd_factor(shape.p, rp, children[2 * j], spectrum)
        psi = random_psd_factor(shape.q, rq, children[2 * j + 1], spectrum)
        factors.append((phi, psi))
    return KronSumCovariance(shape, tuple(factors))


def term_stream(seed, term):
    """Generator for noise term `term`; independent of draw order elsewhere."""
    if isinstance(seed, np.random.SeedSequence):
        entropy, key = seed.entropy, tuple(seed.spawn_key) + (term,)
        return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=key))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(term,)))


def sample_matrix_model(model, n, seed=None):
    """Draw `n` vectors ``vec(sum_j b_j Y_ij a_j^T)``.

    Each term ``j`` gets its own random stream derived from ``(seed, j)``,
    so results do not depend on the order in which terms are drawn.
    """
    n = check_positive_int(n, "n")
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    p, q = model.shape.p, model.shape.q
    x = np.zeros((n, q, p))
    for j, (a, b) in enumerate(model.terms):
        y = term_stream(seed, j).standard_normal((n, q, p))
        x += b @ y @ a.T
    # vec of each q x p matrix: transpose then flatten row-major
    vectors = np.ascontiguousarray(x.transpose(0, 2, 1)).reshape(n, p * q)
    provenance = seed if isinstance(seed, (int, np.integer)) else None
    return SampleSet(vectors, seed=provenance)


def psd_sqrt(m):
    """Symmetric PSD square root; eigenvalues below ``1e-12 * max`` clip to 0."""
    w, v = symmetric_eigendecomposition(m)
    cutoff = 1e-12 * max(w[0], 0.0)
    w = np.where(w < cutoff, 0.0, w)
    root = (v * np.sqrt(w)) @ v.T
    return (root + root.T) / 2


def factorize_for_sampling(cov):
    """Matrix model whose terms are the PSD square roots of the factors."""
    terms = tuple((psd_sqrt(phi), psd_sqrt(psi)) for phi, psi in cov.factors)
    return MatrixModel(cov.shape, terms)


def effective_rank(m):
    """``trace(m) / ||m||`` for a symmetric PSD matrix."""
    m = check_matrix(m, "m", square=True)
    check_symmetric(m, "m", tol=1e-8)
    top = float(np.max(np.abs(np.linalg.eigvalsh((m + m.T) / 2))))
    if top == 0.0:
        raise DegenerateInputError("effective rank of the zero matrix is undefined")
    return float(np.trace(m)) / top


@dataclass(frozen=True)
class BoundInputs:
    """Everything the high-probability bounds depend on.

    `norm_sum` is ``sum_j ||phi_j|| ||psi_j||``; `max_r_phi`, `max_r_psi` are
    the largest effective ranks among the factors. `omega` is the
    sub-exponential constant of the distribution, supplied by the caller.
    """

    omega: float
    n: int
    delta: float
    max_r_phi: float
    max_r_psi: float
    norm_sum: float
    trace_sigma: float = field(default=float("nan"))

    def __post_init__(self):
        if not self.omega > 0:
            raise ContractError(f"omega must be positive, got {self.omega}")
        check_positive_int(self.n, "n")
        # log(4 / delta) must stay positive; experiment specs further keep delta < 1
        if not 0 < self.delta < 4:
            raise ContractError(f"delta must lie in (0, 4), got {self.delta}")

    @classmethod
    def from_covariance(cls, cov, omega, n, delta):
        r_phi = max(effective_rank(phi) for phi, _ in cov.factors)
        r_psi = max(effective_rank(psi) for _, psi in cov.factors)
        norm_sum = sum(
            operator_norm(phi) * operator_norm(psi) for phi, psi in cov.factors
        )
        trace_sigma = sum(
            float(np.trace(phi)) * float(np.trace(psi)) for phi, psi in cov.factors
        )
        return cls(
            omega=float(omega),
            n=int(n),
            delta=float(delta),
            max_r_phi=r_phi,
            max_r_psi=r_psi,
            norm_sum=norm_sum,
            trace_sigma=trace_sigma,
        )


def delta_condition_lhs(inputs):
    """``(max r(phi)^2 + max r(psi)^2) / (2n) + log(4/delta) / n``."""
    n = inputs.n
    return (inputs.max_r_phi**2 + inputs.max_r_psi**2) / (2 * n) + math.log(
        4 / inputs.delta
    ) / n


def delta_condition_holds(inputs):
    return delta_condition_lhs(inputs) <= 1.0


class DeltaConditionError(ContractError):
    def __init__(self, lhs):
        super().__init__(f"delta condition violated: left side {lhs:.6g} > 1")
        self.lhs = lhs


def lemma1_bound(inputs):
    """High-probability bound on ``||R(sample_cov - sigma)||`` (operator norm).

    Raises
    ------
    DeltaConditionError
        If the sample size is too small for the requested confidence.
    """
    lhs = delta_condition_lhs(inputs)
    if lhs > 1.0:
        raise DeltaConditionError(lhs)
    n = inputs.n
    radicand = 13 / (2 * n) * (inputs.max_r_phi**2 + inputs.max_r_psi**2) + 13 * math.log(
        4 / inputs.delta
    ) / n
    return inputs.omega * inputs.norm_sum * math.sqrt(radicand)


def theorem1_lambda(inputs):
    """Smallest penalty covered by the Frobenius guarantee: twice the lemma bound."""
    return 2.0 * lemma1_bound(inputs)


def theorem1_error_bound(lam, k_rank):
    """Squared-Frobenius guarantee ``1.5 * lam**2 * K``."""
    if lam < 0:
        raise ContractError(f"lambda must be >= 0, got {lam}")
    check_positive_int(k_rank, "k_rank")
    return 1.5 * lam * lam * k_rank


def baseline_bound_rate(trace_sigma, n, delta):
    """Unstructured rate ``Tr(Sigma) * max(sqrt(L/n), L/n)`` with ``L = log(2/delta)``.

    This is a rate with its absolute constant set to 1, not a certified bound.
    """
    n = check_positive_int(n, "n")
    if not 0 < delta < 2:
        raise ContractError(f"delta must lie in (0, 2), got {delta}")
    ratio = math.log(2 / delta) / n
    return trace_sigma * max(math.sqrt(ratio), ratio)
