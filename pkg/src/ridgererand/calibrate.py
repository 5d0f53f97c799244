"""Threshold calibration and automatic choice of the ridge parameter.

All Monte Carlo estimates use one n x K matrix of standard normals drawn once
from the budget's seed and reused for every candidate lambda.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ._io import write_csv
from ._rng import substream
from .balance import BalanceCriterion, Kind, _check_truncation
from .core import Spectrum
from .errors import CalibrationError, InputError, SingularCovarianceError
from .wchi2 import (
    DEFAULT_XI,
    WeightedChiSquare,
    chi2_quantile,
    chi2_va,
    ridge_weights,
    wchi2_quantile,
)

log = logging.getLogger(__name__)

MAX_LAMBDA_STEPS = 10**6


@dataclass(frozen=True)
class DesignBudget:
    """Acceptance probability plus the numerical knobs of the calibration."""

    p_a: float = 0.1
    xi: float = DEFAULT_XI
    n: int = 1000
    delta: float = 0.01
    epsilon: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.p_a < 1:
            raise InputError(f"p_a must be in (0, 1), got {self.p_a}")
        if not self.xi > 0:
            raise InputError(f"xi must be > 0, got {self.xi}")
        if int(self.n) != self.n or self.n < 100:
            raise InputError(f"n must be an integer >= 100, got {self.n}")
        if not (self.delta > 0 and self.epsilon > 0):
            raise InputError("delta and epsilon must be > 0")


class Candidate(NamedTuple):
    lam: float
    a_lambda: float
    mean_v_hat: float
    objective: float
    admitted: bool


@dataclass(frozen=True)
class CalibrationResult:
    lambda_star: float
    threshold: float
    d_hat: np.ndarray
    d_hat_se: np.ndarray
    v_hat: np.ndarray
    v_a: float
    candidate_set: tuple = field(default=())
    shared_draws_digest: str = ""

    @property
    def admitted(self) -> list:
        return [c.lam for c in self.candidate_set if c.admitted]

    def write_trace(self, path) -> None:
        """Export the search trace as CSV (lambda, a_lambda, mean_v_hat, objective, admitted)."""
        rows = [(c.lam, c.a_lambda, c.mean_v_hat, c.objective, int(c.admitted)) for c in self.candidate_set]
        write_csv(path, ["lambda", "a_lambda", "mean_v_hat", "objective", "admitted"], rows)


def default_delta(s: Spectrum) -> float:
    """min(0.01, g / 10), g the smallest positive gap between consecutive eigenvalues (lambda_0 = 0)."""
    lam = np.sort(s.eigenvalues)
    gaps = np.diff(np.concatenate([[0.0], lam]))
    gaps = gaps[gaps > 0]
    if gaps.size == 0:
        return 0.01
    return min(0.01, float(gaps.min()) / 10)


def shared_draws(budget: DesignBudget, k: int) -> np.ndarray:
    return substream(budget.seed, "calibration").standard_normal((budget.n, k))


def draws_digest(z: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(z, dtype="<f8").tobytes()).hexdigest()


def calibrate_threshold(s: Spectrum, lam: float, budget: DesignBudget) -> float:
    """p_a-quantile of the ridge null law Q_lambda (the threshold a_lambda).

    For lambda = 0 the law is exactly chi2_K, so the closed-form quantile is used.
    """
    w = ridge_weights(s, lam)
    if lam == 0:
        return float(chi2_quantile(s.n_covariates, budget.p_a))
    return wchi2_quantile(w, budget.p_a, budget.xi)


def criterion_law(c: BalanceCriterion, s: Spectrum):
    """Null law of a criterion as (weights, threshold on the weighted-chi2 scale).

    Under normal mean differences every criterion is a weighted sum of the
    squared principal-component scores, so d_k can be estimated uniformly.
    """
    lam = s.eigenvalues
    if c.kind is Kind.EUCLIDEAN:
        return WeightedChiSquare(lam / lam[0]), c.threshold / lam[0]
    if c.kind is Kind.TRUNCATED:
        _check_truncation(s, c.k_e)
        w = np.zeros_like(lam)
        w[: c.k_e] = 1.0
        return WeightedChiSquare(w), c.threshold
    return ridge_weights(s, c.lam if c.kind is Kind.RIDGE else 0.0), c.threshold


def calibrate_criterion(kind, s: Spectrum, p_a: float, *, lam: float = 0.0,
                        k_e: Optional[int] = None, xi: float = DEFAULT_XI) -> BalanceCriterion:
    """Criterion whose threshold gives acceptance probability ``p_a`` under normality."""
    kind = Kind(kind)
    budget = DesignBudget(p_a=p_a, xi=xi)
    if kind is Kind.MAHALANOBIS:
        if s.is_singular():
            raise SingularCovarianceError(
                "Sigma is singular; the Mahalanobis criterion is undefined. Use the ridge criterion with lambda > 0."
            )
        return BalanceCriterion(kind, calibrate_threshold(s, 0.0, budget))
    if kind is Kind.RIDGE:
        return BalanceCriterion(kind, calibrate_threshold(s, lam, budget), lam=lam)
    if kind is Kind.TRUNCATED:
        _check_truncation(s, k_e)
        return BalanceCriterion(kind, float(chi2_quantile(k_e, p_a)), k_e=k_e)
    ev = s.eigenvalues
    q = wchi2_quantile(WeightedChiSquare(ev / ev[0]), p_a, xi)
    return BalanceCriterion(kind, float(ev[0] * q))


def estimate_d(w: WeightedChiSquare, threshold: float, z: np.ndarray, return_se: bool = False):
    """Monte Carlo estimate of d_k = E[Z_k^2 | sum_j w_j Z_j^2 <= threshold].

    Returns the K-vector of estimates, and with ``return_se`` also their
    standard errors sqrt(var(accepted Z_k^2) / n_accepted).
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] != w.weights.size:
        raise InputError(f"draw matrix has shape {z.shape}, expected (n, {w.weights.size})")
    z2 = z * z
    accepted = z2 @ w.weights <= threshold
    n_acc = int(accepted.sum())
    if n_acc == 0:
        raise CalibrationError(
            f"no Monte Carlo replicate out of {z.shape[0]} satisfies the threshold {threshold:g}; "
            "increase n or check the threshold"
        )
    za = z2[accepted]
    d = za.mean(axis=0)
    if not return_se:
        return d
    se = za.std(axis=0, ddof=1) / math.sqrt(n_acc) if n_acc > 1 else np.full_like(d, np.inf)
    return d, se


def estimate_v(s: Spectrum, d_hat) -> np.ndarray:
    """Per-covariate variance ratios diag(Gamma Diag(lambda_j d_j) Gamma^T) / diag(Sigma)."""
    d_hat = np.asarray(d_hat, dtype=float)
    if d_hat.shape != s.eigenvalues.shape:
        raise InputError(f"d_hat has shape {d_hat.shape}, expected {s.eigenvalues.shape}")
    diag = np.diag(s.sigma)
    if np.any(diag <= 0):
        k = int(np.flatnonzero(diag <= 0)[0])
        raise InputError(f"covariate {k + 1} is constant (zero variance)")
    g = s.eigenvectors
    return (g * g) @ (s.eigenvalues * d_hat) / diag


def structure_objective(s: Spectrum, d_hat) -> float:
    """Weighted spread of d_hat, weights lambda_k^2 / sum lambda_j^2.

    Zero exactly when the conditional covariance is proportional to Sigma.
    """
    lam2 = s.eigenvalues ** 2
    c = lam2 / lam2.sum()
    return float(c @ (d_hat * d_hat) - (c @ d_hat) ** 2)


def _check_ordering(d, se, lam):
    # soft check of the conjectured ordering d_1 <= ... <= d_K
    drop = d[:-1] - d[1:]
    tol = 4 * np.sqrt(se[:-1] ** 2 + se[1:] ** 2)
    bad = np.flatnonzero(drop > tol)
    if bad.size:
        log.warning("d_hat not non-decreasing beyond 4 SE at lambda=%g (components %s)",
                    lam, ", ".join(str(k + 1) for k in bad[:5]))


def select_lambda(s: Spectrum, budget: DesignBudget) -> CalibrationResult:
    """Search lambda = delta, 2 delta, ... until lambda * a_lambda stabilises.

    A candidate is admitted when the mean of v_hat is strictly below v_a; the
    admitted candidate minimising :func:`structure_objective` wins (smallest
    lambda on ties). With no admitted candidate lambda = 0 is returned.
    """
    k = s.n_covariates
    z = shared_draws(budget, k)
    v_a = chi2_va(k, budget.p_a)
    trace = []
    estimates = {}
    prod = 0.0  # lambda * a_lambda at lambda = 0
    step = 0
    while True:
        if step >= MAX_LAMBDA_STEPS:
            raise CalibrationError(
                f"lambda search exceeded {MAX_LAMBDA_STEPS} steps; delta={budget.delta} or epsilon={budget.epsilon} mis-set"
            )
        lam_next = (step + 1) * budget.delta
        a_next = calibrate_threshold(s, lam_next, budget)
        if abs(lam_next * a_next - prod) <= budget.epsilon:
            break
        step += 1
        lam, prod = lam_next, lam_next * a_next
        w = ridge_weights(s, lam)
        d, se = estimate_d(w, a_next, z, return_se=True)
        v = estimate_v(s, d)
        admitted = bool(v.mean() < v_a)
        trace.append(Candidate(lam, a_next, float(v.mean()), structure_objective(s, d), admitted))
        estimates[lam] = (a_next, d, se, v)
        _check_ordering(d, se, lam)
        log.debug("lambda=%g a=%g mean v=%g admitted=%s", lam, a_next, v.mean(), admitted)

    admitted = [c for c in trace if c.admitted]
    if admitted:
        best = min(admitted, key=lambda c: (c.objective, c.lam))
        lam_star = best.lam
        a, d, se, v = estimates[lam_star]
    else:
        if s.is_singular():
            raise CalibrationError(
                "no lambda on the search grid reduced the mean variance ratio below v_a, and Sigma is "
                "singular so lambda = 0 is unavailable; give lambda explicitly"
            )
        lam_star = 0.0
        a = calibrate_threshold(s, 0.0, budget)
        d, se = estimate_d(ridge_weights(s, 0.0), a, z, return_se=True)
        v = estimate_v(s, d)
    return CalibrationResult(
        lambda_star=lam_star,
        threshold=a,
        d_hat=d,
        d_hat_se=se,
        v_hat=v,
        v_a=v_a,
        candidate_set=tuple(trace),
        shared_draws_digest=draws_digest(z),
    )


def calibrate_fixed(s: Spectrum, c: BalanceCriterion, budget: DesignBudget) -> CalibrationResult:
    """d_hat / v_hat for an already-chosen criterion, using the shared draws."""
    z = shared_draws(budget, s.n_covariates)
    w, thr = criterion_law(c, s)
    d, se = estimate_d(w, thr, z, return_se=True)
    return CalibrationResult(
        lambda_star=c.lam if c.kind is Kind.RIDGE else 0.0,
        threshold=c.threshold,
        d_hat=d,
        d_hat_se=se,
        v_hat=estimate_v(s, d),
        v_a=chi2_va(s.n_covariates, budget.p_a),
        shared_draws_digest=draws_digest(z),
    )
