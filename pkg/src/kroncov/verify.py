"""Self-check battery run by ``kroncov verify``.

Each check draws small random instances, measures the worst residual of an
identity that must hold, and compares it with a fixed tolerance.
"""

from typing import NamedTuple

import numpy as np

from .linalg import (
    frobenius_norm,
    kron,
    nuclear_norm,
    operator_norm,
    soft_threshold_svd,
    svd,
    unvec,
    vec,
)
from .model import assemble_sigma, random_kron_sum
from .rearrangement import rearrange, rearrange_inverse

__all__ = ["CheckResult", "run_checks"]


class CheckResult(NamedTuple):
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self):
        return self.residual <= self.tolerance


def _rel(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b)) / scale)


def _dims(rng, hi=6):
    return tuple(int(v) for v in rng.integers(1, hi + 1, size=4))


def check_vec_roundtrip(rng, trials):
    worst = 0.0
    for _ in range(trials):
        r, c, _, _ = _dims(rng)
        m = rng.standard_normal((r, c))
        worst = max(worst, float(np.max(np.abs(unvec(vec(m), r, c) - m))))
    return worst


def check_mixed_product(rng, trials):
    worst = 0.0
    for _ in range(trials):
        a1, a2, b1, b2 = _dims(rng)
        a3, b3 = (int(v) for v in rng.integers(1, 7, size=2))
        A, C = rng.standard_normal((a1, a2)), rng.standard_normal((a2, a3))
        B, D = rng.standard_normal((b1, b2)), rng.standard_normal((b2, b3))
        worst = max(worst, _rel(kron(A, B) @ kron(C, D), kron(A @ C, B @ D)))
    return worst


def check_kron_trace(rng, trials):
    worst = 0.0
    for _ in range(trials):
        p, q, _, _ = _dims(rng)
        A, B = rng.standard_normal((p, p)), rng.standard_normal((q, q))
        lhs, rhs = np.trace(kron(A, B)), np.trace(A) * np.trace(B)
        worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1.0))
    return worst


def check_kron_operator_norm(rng, trials):
    worst = 0.0
    for _ in range(trials):
        a1, a2, b1, b2 = _dims(rng)
        A, B = rng.standard_normal((a1, a2)), rng.standard_normal((b1, b2))
        rhs = operator_norm(A) * operator_norm(B)
        worst = max(worst, abs(operator_norm(kron(A, B)) - rhs) / rhs)
    return worst


def check_kron_frobenius(rng, trials):
    worst = 0.0
    for _ in range(trials):
        a1, a2, b1, b2 = _dims(rng)
        A, B = rng.standard_normal((a1, a2)), rng.standard_normal((b1, b2))
        rhs = frobenius_norm(A) * frobenius_norm(B)
        worst = max(worst, abs(frobenius_norm(kron(A, B)) - rhs) / rhs)
    return worst


def check_kron_vec(rng, trials):
    worst = 0.0
    for _ in range(trials):
        a1, a2, b1, b2 = _dims(rng)
        A, B = rng.standard_normal((a1, a2)), rng.standard_normal((b1, b2))
        U = rng.standard_normal((b2, a2))
        worst = max(worst, _rel(kron(A, B) @ vec(U), vec(B @ U @ A.T)))
    return worst


def check_kron_trace_form(rng, trials):
    worst = 0.0
    for _ in range(trials):
        a1, a2, b1, b2 = _dims(rng)
        A, B = rng.standard_normal((a1, a2)), rng.standard_normal((b1, b2))
        U, V = rng.standard_normal((b2, a2)), rng.standard_normal((b1, a1))
        lhs = np.trace(V.T @ B @ U @ A.T)
        rhs = vec(V) @ kron(A, B) @ vec(U)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1.0))
    return worst


def check_rearrange_isometry(rng, trials):
    worst = 0.0
    for _ in range(trials):
        p, q, _, _ = _dims(rng)
        m = rng.standard_normal((p * q, p * q))
        lhs, rhs = frobenius_norm(rearrange(m, (p, q))), frobenius_norm(m)
        worst = max(worst, abs(lhs - rhs) / rhs)
    return worst


def check_rearrange_linearity(rng, trials):
    worst = 0.0
    for _ in range(trials):
        p, q, _, _ = _dims(rng)
        a, b = rng.standard_normal((p * q, p * q)), rng.standard_normal((p * q, p * q))
        s, t = rng.standard_normal(2)
        lhs = rearrange(s * a + t * b, (p, q))
        rhs = s * rearrange(a, (p, q)) + t * rearrange(b, (p, q))
        worst = max(worst, _rel(lhs, rhs))
    return worst


def check_rearrange_kron(rng, trials):
    worst = 0.0
    for _ in range(trials):
        p, q, _, _ = _dims(rng)
        A, B = rng.standard_normal((p, p)), rng.standard_normal((q, q))
        worst = max(worst, _rel(rearrange(kron(A, B), (p, q)), np.outer(vec(A), vec(B))))
    return worst


def check_rearrange_roundtrip(rng, trials):
    worst = 0.0
    for _ in range(trials):
        p, q, _, _ = _dims(rng)
        m = rng.standard_normal((p * q, p * q))
        r = rng.standard_normal((p * p, q * q))
        worst = max(
            worst,
            float(np.max(np.abs(rearrange_inverse(rearrange(m, (p, q)), (p, q)) - m))),
            float(np.max(np.abs(rearrange(rearrange_inverse(r, (p, q)), (p, q)) - r))),
        )
    return worst


def check_rank_oracle(rng, trials):
    worst = 0.0
    for t in range(trials):
        k = 1 + t % 3
        cov = random_kron_sum((4, 4), rng.uniform(1, 4, k), rng.uniform(1, 4, k), seed=rng.integers(2**32))
        s = svd(rearrange(assemble_sigma(cov), (4, 4))).singular_values
        worst = max(worst, s[k] / s[0])
    return worst


def check_svd(rng, trials):
    worst = 0.0
    for _ in range(trials):
        r, c = (int(v) for v in rng.integers(1, 25, size=2))
        m = rng.standard_normal((r, c))
        u, s, v = svd(m)
        worst = max(
            worst,
            frobenius_norm((u * s) @ v.T - m) / frobenius_norm(m),
            float(np.max(np.abs(u.T @ u - np.eye(u.shape[1])))),
            float(np.max(np.abs(v.T @ v - np.eye(v.shape[1])))),
        )
    return worst


def check_soft_threshold_spectrum(rng, trials):
    worst = 0.0
    for _ in range(trials):
        r, c, _, _ = _dims(rng, 8)
        m = rng.standard_normal((r, c))
        lam = float(rng.uniform(0, 4))
        expected = np.maximum(svd(m).singular_values - lam / 2, 0)
        got = svd(soft_threshold_svd(m, lam)).singular_values
        worst = max(worst, float(np.max(np.abs(got - expected))))
    return worst


def _prox_objective(r, m, lam):
    return frobenius_norm(r - m) ** 2 + lam * nuclear_norm(r)


def check_prox_optimality(rng, trials, perturbations=200):
    """Largest amount by which a random perturbation beats the prox output."""
    worst = 0.0
    for t in range(trials):
        m = rng.standard_normal((6, 8))
        lam = (0.1, 1.0, 10.0)[t % 3]
        out = soft_threshold_svd(m, lam)
        best = _prox_objective(out, m, lam)
        for i in range(perturbations):
            eps = 1e-3 if i % 2 == 0 else 1e-2
            trial = out + eps * rng.standard_normal(out.shape)
            worst = max(worst, best - _prox_objective(trial, m, lam))
    return worst


CHECKS = (
    ("vec/unvec round-trip", check_vec_roundtrip, 0.0),
    ("kron mixed product", check_mixed_product, 1e-11),
    ("kron trace product", check_kron_trace, 1e-11),
    ("kron operator-norm product", check_kron_operator_norm, 1e-11),
    ("kron Frobenius product", check_kron_frobenius, 1e-11),
    ("kron vec identity", check_kron_vec, 1e-11),
    ("kron trace identity", check_kron_trace_form, 1e-11),
    ("rearrangement isometry", check_rearrange_isometry, 1e-12),
    ("rearrangement linearity", check_rearrange_linearity, 1e-12),
    ("rearrangement of kron is rank one", check_rearrange_kron, 1e-12),
    ("rearrangement round-trips", check_rearrange_roundtrip, 0.0),
    ("Kronecker-rank oracle", check_rank_oracle, 1e-9),
    ("SVD reconstruction and orthonormality", check_svd, 1e-10),
    ("soft-threshold spectrum", check_soft_threshold_spectrum, 1e-10),
    ("prox optimality under perturbation", check_prox_optimality, 1e-12),
)


def run_checks(seed=0, trials=100):
    """Run every check; returns a list of :class:`CheckResult`."""
    results = []
    for i, (name, fn, tol) in enumerate(CHECKS):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        n = trials if fn is not check_prox_optimality else max(trials // 5, 1)
        results.append(CheckResult(name, float(fn(rng, n)), tol))
    return results
