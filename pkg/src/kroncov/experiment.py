"""Monte Carlo harness: sweep estimators over sample sizes and check the bounds.

Every random draw is keyed by ``(seed, trial, ...)`` through
``numpy.random.SeedSequence`` spawn keys, so a run is reproducible no matter
how trials are scheduled across threads. BLAS is pinned to one thread while
trials run; parallelism comes only from running trials concurrently.
"""

import csv
import hashlib
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple

import numpy as np
from threadpoolctl import threadpool_limits

from .estimators import (
    METHODS,
    default_lam0,
    estimate,
    lambda_grid,
    sample_covariance,
    select_lambda,
)
from .exceptions import ContractError, DegenerateInputError
from .model import (
    BoundInputs,
    assemble_sigma,
    delta_condition_lhs,
    factorize_for_sampling,
    lemma1_bound,
    random_kron_sum,
    sample_matrix_model,
    theorem1_error_bound,
    theorem1_lambda,
)
from .rearrangement import BlockShape, _as_shape, rearranged_deviation_norm

logger = logging.getLogger(__name__)

__all__ = [
    "LambdaPolicy",
    "ExperimentSpec",
    "TrialRecord",
    "Coverage",
    "run_experiment",
    "rate_slope",
    "coverage_report",
    "calibrate_omega",
    "median_errors",
    "summarize",
    "records_to_csv",
    "records_from_csv",
]

# spawn keys are (run, trial, stream[, n index]); the tags keep streams disjoint
_MAIN, _PILOT = 0, 1
_MODEL, _DATA, _SPLIT = 0, 1, 2
_FIXED_MODEL_TRIAL = 2**32 - 1

POLICIES = ("theorem1", "grid_select", "fixed")


@dataclass(frozen=True)
class LambdaPolicy:
    """How the pls_soft penalty is chosen in each trial.

    ``theorem1`` uses twice the operator-norm bound with the given `omega`;
    ``grid_select`` picks from ``lam0 * 2**-j, j = 0..m`` by random splitting
    (``lam0=None`` means twice the top rearranged singular value);
    ``fixed`` uses `lam` everywhere.
    """

    kind: str = "grid_select"
    omega: float | None = None
    lam0: float | None = None
    m: int = 16
    split: float = 0.5
    repetitions: int = 5
    lam: float | None = None

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ContractError(f"unknown lambda policy {self.kind!r}; expected {POLICIES}")
        if self.kind == "theorem1" and not (self.omega is not None and self.omega > 0):
            raise ContractError("theorem1 policy needs a positive omega")
        if self.kind == "fixed" and not (self.lam is not None and self.lam >= 0):
            raise ContractError("fixed policy needs lam >= 0")
        if self.kind == "grid_select":
            if self.lam0 is not None and not self.lam0 > 0:
                raise ContractError("lam0 must be positive")
            if not 0 < self.split < 1:
                raise ContractError("split must lie in (0, 1)")
            if self.m < 0 or self.repetitions < 1:
                raise ContractError("need m >= 0 and repetitions >= 1")


@dataclass(frozen=True)
class ExperimentSpec:
    """A grid of Monte Carlo runs.

    `phi_ranks` and `psi_ranks` are the target effective ranks of the K
    factor pairs. `omega`, when set, is used to report bound values for
    policies other than ``theorem1``.
    """

    shape: BlockShape
    k_rank: int
    phi_ranks: tuple
    psi_ranks: tuple
    n_grid: tuple
    delta: float = 0.05
    estimators: tuple = ("sample", "pls_soft")
    lambda_policy: LambdaPolicy = field(default_factory=LambdaPolicy)
    trials: int = 1
    seed: int = 0
    fixed_model: bool = False
    omega: float | None = None
    spectrum: str = "geometric"

    def __post_init__(self):
        object.__setattr__(self, "shape", _as_shape(self.shape))
        for name in ("phi_ranks", "psi_ranks", "n_grid", "estimators"):
            value = getattr(self, name)
            if isinstance(value, (int, float, str)):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
        if isinstance(self.lambda_policy, dict):
            object.__setattr__(self, "lambda_policy", LambdaPolicy(**self.lambda_policy))
        if self.k_rank < 1:
            raise ContractError("k_rank must be >= 1")
        if len(self.phi_ranks) == 1 and self.k_rank > 1:
            object.__setattr__(self, "phi_ranks", self.phi_ranks * self.k_rank)
        if len(self.psi_ranks) == 1 and self.k_rank > 1:
            object.__setattr__(self, "psi_ranks", self.psi_ranks * self.k_rank)
        if len(self.phi_ranks) != self.k_rank or len(self.psi_ranks) != self.k_rank:
            raise ContractError("need one effective-rank target per Kronecker term")
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise ContractError("n_grid must hold positive sample sizes")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ContractError("n_grid must be strictly increasing")
        if self.trials < 1:
            raise ContractError("trials must be >= 1")
        if not 0 < self.delta < 1:
            raise ContractError("delta must lie in (0, 1)")
        bad = [e for e in self.estimators if e not in METHODS]
        if bad or not self.estimators:
            raise ContractError(f"unknown estimators {bad}; expected a subset of {METHODS}")
        if self.seed < 0:
            raise ContractError("seed must be non-negative")
        if self.lambda_policy.kind == "theorem1":
            r2 = max(self.phi_ranks) ** 2 + max(self.psi_ranks) ** 2
            for n in self.n_grid:
                lhs = r2 / (2 * n) + math.log(4 / self.delta) / n
                if lhs > 1:
                    raise ContractError(
                        f"delta condition fails at n={n}: left side {lhs:.4g} > 1"
                    )

    @property
    def bound_omega(self):
        if self.lambda_policy.kind == "theorem1":
            return self.lambda_policy.omega
        return self.omega

    def to_dict(self):
        out = asdict(self)
        out["shape"] = {"p": self.shape.p, "q": self.shape.q}
        for key in ("phi_ranks", "psi_ranks", "n_grid", "estimators"):
            out[key] = list(out[key])
        return out

    @property
    def spec_id(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class TrialRecord:
    spec_id: str
    trial: int
    estimator: str
    n: int
    lambda_used: float | None
    frobenius_error: float
    squared_frobenius_error: float
    operator_error_rearranged: float
    theorem1_bound_value: float
    lemma1_bound_value: float
    retained_rank: int
    wall_time: float = 0.0


# wall_time is machine-dependent and kept out of the deterministic result file
RECORD_FIELDS = tuple(f.name for f in fields(TrialRecord) if f.name != "wall_time")


def _seq(seed, *key):
    return np.random.SeedSequence(seed, spawn_key=key)


def _trial_model(spec, run, trial):
    if spec.fixed_model:
        run, trial = _MAIN, _FIXED_MODEL_TRIAL
    return random_kron_sum(
        spec.shape,
        spec.phi_ranks,
        spec.psi_ranks,
        _seq(spec.seed, run, trial, _MODEL),
        spec.spectrum,
    )


def _pls_lambda(spec, x, cov_model, n, trial, n_index):
    policy = spec.lambda_policy
    if policy.kind == "fixed":
        return float(policy.lam)
    if policy.kind == "theorem1":
        return theorem1_lambda(BoundInputs.from_covariance(cov_model, policy.omega, n, spec.delta))
    lam0 = policy.lam0 if policy.lam0 is not None else default_lam0(x, spec.shape)
    split_seed = int(_seq(spec.seed, _MAIN, trial, _SPLIT, n_index).generate_state(1, np.uint64)[0])
    lam, _ = select_lambda(
        x,
        spec.shape,
        lambda_grid(lam0, policy.m),
        split_fraction=policy.split,
        repetitions=policy.repetitions,
        seed=split_seed,
    )
    return lam


def _run_trial(spec, trial):
    cov_model = _trial_model(spec, _MAIN, trial)
    sigma = assemble_sigma(cov_model)
    sampler = factorize_for_sampling(cov_model)
    omega = spec.bound_omega
    spec_id = spec.spec_id
    records = []
    for n_index, n in enumerate(spec.n_grid):
        data = sample_matrix_model(sampler, n, seed=_seq(spec.seed, _MAIN, trial, _DATA, n_index))
        x = data.vectors
        dev = rearranged_deviation_norm(sample_covariance(x), sigma, spec.shape)
        lemma = theorem = float("nan")
        if omega is not None:
            inputs = BoundInputs.from_covariance(cov_model, omega, n, spec.delta)
            if delta_condition_lhs(inputs) <= 1:
                lemma = lemma1_bound(inputs)
                theorem = theorem1_error_bound(2 * lemma, spec.k_rank)
        for name in spec.estimators:
            start = time.perf_counter()
            lam = None
            if name == "pls_soft":
                lam = _pls_lambda(spec, x, cov_model, n, trial, n_index)
            report = estimate(
                x, spec.shape, name, lam=lam, k=min(spec.k_rank, spec.shape.p**2, spec.shape.q**2),
                truth=sigma,
            )
            elapsed = time.perf_counter() - start
            err = report.frobenius_error
            records.append(
                TrialRecord(
                    spec_id=spec_id,
                    trial=trial,
                    estimator=name,
                    n=n,
                    lambda_used=lam,
                    frobenius_error=err,
                    squared_frobenius_error=err * err,
                    operator_error_rearranged=dev,
                    theorem1_bound_value=theorem,
                    lemma1_bound_value=lemma,
                    retained_rank=report.effective_rank_estimate,
                    wall_time=elapsed,
                )
            )
    return records


def run_experiment(spec, threads=1):
    """Run every (trial, n, estimator) cell of `spec`.

    Returns records sorted by ``(trial, n, position in spec.estimators)``;
    the content is identical for any `threads` value.
    """
    if threads < 1:
        raise ContractError("threads must be >= 1")
    order = {name: i for i, name in enumerate(spec.estimators)}
    logger.info("running %d trials over n=%s with %d thread(s)", spec.trials, spec.n_grid, threads)
    with threadpool_limits(limits=1):
        if threads == 1:
            chunks = [_run_trial(spec, t) for t in range(spec.trials)]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                chunks = list(pool.map(lambda t: _run_trial(spec, t), range(spec.trials)))
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.trial, r.n, order[r.estimator]))
    return records


def calibrate_omega(spec, reference_n=256, pilot_trials=200):
    """Smallest omega for which the operator-norm bound holds on a pilot run.

    The pilot draws fresh models and data from streams disjoint from those
    of :func:`run_experiment` with the same seed. Since the bound is linear
    in omega, the answer is the largest ratio of the observed rearranged
    deviation to the bound evaluated at ``omega = 1``.
    """
    if pilot_trials < 1:
        raise ContractError("pilot_trials must be >= 1")
    ratios = []
    with threadpool_limits(limits=1):
        for t in range(pilot_trials):
            cov_model = _trial_model(spec, _PILOT, t)
            sigma = assemble_sigma(cov_model)
            data = sample_matrix_model(
                factorize_for_sampling(cov_model), reference_n, seed=_seq(spec.seed, _PILOT, t, _DATA)
            )
            dev = rearranged_deviation_norm(sample_covariance(data.vectors), sigma, spec.shape)
            unit = lemma1_bound(BoundInputs.from_covariance(cov_model, 1.0, reference_n, spec.delta))
            ratios.append(dev / unit)
    omega = float(max(ratios))
    logger.info("calibrated omega=%.6g from %d pilot trials at n=%d", omega, pilot_trials, reference_n)
    return omega


def median_errors(records, estimator, error_field="frobenius_error"):
    """Sorted sample sizes and the median of `error_field` at each."""
    by_n = {}
    for r in records:
        if r.estimator == estimator:
            by_n.setdefault(r.n, []).append(getattr(r, error_field))
    ns = np.array(sorted(by_n), dtype=np.float64)
    meds = np.array([np.median(by_n[n]) for n in sorted(by_n)])
    return ns, meds


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


def rate_slope(records, estimator, error_field="frobenius_error"):
    """Least-squares fit of ``log(median error)`` against ``log(n)``."""
    ns, meds = median_errors(records, estimator, error_field)
    if ns.size < 3:
        raise ContractError(f"need at least 3 distinct n values, got {ns.size}")
    if np.any(meds <= 0):
        raise DegenerateInputError("median errors must be positive to take logs")
    lx, ly = np.log(ns), np.log(meds)
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(float(slope), float(intercept), r2)


class Coverage(NamedTuple):
    lemma1_coverage: float
    theorem1_coverage: float
    target: float

    @property
    def met(self):
        return self.lemma1_coverage >= self.target and self.theorem1_coverage >= self.target


def coverage_report(records, delta, estimator="pls_soft"):
    """Fractions of `estimator` records within the operator-norm and Frobenius bounds.

    The Frobenius check uses the strict inequality of the guarantee.
    """
    chosen = [r for r in records if r.estimator == estimator]
    if not chosen:
        raise ContractError(f"no records for estimator {estimator!r}")
    if any(math.isnan(r.lemma1_bound_value) or math.isnan(r.theorem1_bound_value) for r in chosen):
        raise ContractError("records lack bound values; run with an omega")
    lemma = sum(r.operator_error_rearranged <= r.lemma1_bound_value for r in chosen)
    theorem = sum(r.squared_frobenius_error < r.theorem1_bound_value for r in chosen)
    return Coverage(lemma / len(chosen), theorem / len(chosen), 1.0 - delta)


def summarize(spec, records):
    """Rate fits per estimator, medians per n, and coverage when available."""
    out = {"spec_id": spec.spec_id, "records": len(records), "estimators": {}}
    for name in spec.estimators:
        ns, meds = median_errors(records, name)
        entry = {
            "n": [int(n) for n in ns],
            "median_frobenius_error": [float(m) for m in meds],
        }
        if ns.size >= 3 and np.all(meds > 0):
            fit = rate_slope(records, name)
            entry["rate"] = fit._asdict()
        out["estimators"][name] = entry
    if spec.bound_omega is not None and "pls_soft" in spec.estimators:
        try:
            cov = coverage_report(records, spec.delta)
        except ContractError:
            cov = None
        if cov is not None:
            out["coverage"] = {**cov._asdict(), "met": cov.met, "omega": spec.bound_omega}
    return out


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records, include_timing=False):
    """Render records as CSV text with a header row."""
    cols = RECORD_FIELDS + (("wall_time",) if include_timing else ())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in records:
        writer.writerow([_fmt(getattr(r, c)) for c in cols])
    return buf.getvalue()


def records_from_csv(text):
    rows = csv.DictReader(io.StringIO(text))
    out = []
    for row in rows:
        out.append(
            TrialRecord(
                spec_id=row["spec_id"],
                trial=int(row["trial"]),
                estimator=row["estimator"],
                n=int(row["n"]),
                lambda_used=float(row["lambda_used"]) if row["lambda_used"] else None,
                frobenius_error=float(row["frobenius_error"]),
                squared_frobenius_error=float(row["squared_frobenius_error"]),
                operator_error_rearranged=float(row["operator_error_rearranged"]),
                theorem1_bound_value=float(row["theorem1_bound_value"]),
                lemma1_bound_value=float(row["lemma1_bound_value"]),
                retained_rank=int(row["retained_rank"]),
                wall_time=float(row.get("wall_time") or 0.0),
            )
        )
    return out
