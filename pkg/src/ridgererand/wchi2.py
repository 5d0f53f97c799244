"""Weighted sums of independent chi-square(1) variables.

Q = sum_k w_k Z_k^2 with 0 <= w_k <= 1. The CDF is obtained by Imhof's
inversion of the characteristic function, truncated at an upper limit that
bounds the truncation error by ``xi``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .core import Spectrum
from .errors import InputError, NumericalError, QuadratureError, SingularCovarianceError

DEFAULT_XI = 1e-4
QUAD_EPSABS = 1e-8
# combined quadrature error estimate (on the integral) above which we give up
_QUAD_FAIL = 1e-6
_QUANTILE_XTOL = 1e-8
_SEGMENT_RATIO = 100.0


@dataclass(frozen=True)
class WeightedChiSquare:
    """Weights of Q = sum_k w_k Z_k^2, stored non-increasing (zeros kept)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise InputError("weights must be a non-empty finite vector")
        if np.any(w < 0) or np.any(w > 1):
            raise InputError("weights must lie in [0, 1]")
        if not np.any(w > 0):
            raise InputError("all weights are zero; the distribution is degenerate at 0")
        if np.any(np.diff(w) > 0):
            raise InputError("weights must be sorted non-increasing")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def positive(self) -> np.ndarray:
        return self.weights[self.weights > 0]

    @classmethod
    def of(cls, weights) -> WeightedChiSquare:
        """Build from unsorted weights (sorted here)."""
        return cls(np.sort(np.asarray(weights, dtype=float))[::-1])

    def sample(self, rng, size: int) -> np.ndarray:
        z = rng.standard_normal((size, self.weights.size))
        return (z * z) @ self.weights


def ridge_weights(s: Spectrum, lam: float) -> WeightedChiSquare:
    """Weights lambda_k / (lambda_k + lam) of the ridge Mahalanobis null law."""
    if not lam >= 0:
        raise InputError(f"lambda must be >= 0, got {lam}")
    ev = s.eigenvalues
    if not np.any(ev > 0):
        raise InputError("all eigenvalues of Sigma are zero")
    if lam == 0:
        if np.any(ev == 0):
            raise SingularCovarianceError("Sigma is singular; lambda must be > 0")
        return WeightedChiSquare(np.ones_like(ev))
    w = ev / (ev + lam)
    # keep non-increasing order exactly despite rounding
    return WeightedChiSquare(np.minimum.accumulate(w))


def truncation_bound(w: WeightedChiSquare, xi: float) -> float:
    """Upper integration limit U_xi = [xi pi (K/2) prod sqrt(w_k)]^(-2/K).

    Zero weights are dropped and K is the number of positive weights.
    """
    if not xi > 0:
        raise InputError(f"xi must be > 0, got {xi}")
    wp = w.positive
    k = wp.size
    log_base = math.log(xi * math.pi * k / 2) + 0.5 * float(np.log(wp).sum())
    return math.exp(-2.0 / k * log_base)


def _integrand_parts(wp):
    def full(t, q):
        if t == 0.0:
            return 0.5 * (wp.sum() - q)
        theta = 0.5 * (np.arctan(wp * t).sum() - q * t)
        rho = math.exp(0.25 * np.log1p((wp * t) ** 2).sum())
        return math.sin(theta) / (t * rho)

    # sin(b - qt/2) = sin(b) cos(qt/2) - cos(b) sin(qt/2), b = sum arctan(w t) / 2
    def amp_cos(t):
        b = 0.5 * np.arctan(wp * t).sum()
        return math.sin(b) / (t * math.exp(0.25 * np.log1p((wp * t) ** 2).sum()))

    def amp_sin(t):
        b = 0.5 * np.arctan(wp * t).sum()
        return math.cos(b) / (t * math.exp(0.25 * np.log1p((wp * t) ** 2).sum()))

    return full, amp_cos, amp_sin


def _quad(*args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(*args, epsabs=QUAD_EPSABS, epsrel=1e-10, limit=1000, full_output=1, **kw)
    return out[0], out[1]


def imhof_cdf(w: WeightedChiSquare, q: float, xi: float = DEFAULT_XI) -> float:
    """P(Q <= q) by Imhof inversion truncated at ``truncation_bound(w, xi)``.

    The oscillatory tail is integrated with Fourier-weighted (QAWO) quadrature,
    in geometric segments, once several periods of cos(q t / 2) have elapsed;
    before that a plain adaptive rule is used, with the analytic limit
    (sum w - q) / 2 at t = 0.
    """
    if not xi > 0:
        raise InputError(f"xi must be > 0, got {xi}")
    q = float(q)
    if q <= 0:
        return 0.0
    wp = w.positive
    upper = truncation_bound(w, xi)
    full, amp_cos, amp_sin = _integrand_parts(wp)
    split = min(upper, 20.0 * math.pi / q)
    value, err = _quad(full, 0.0, split, args=(q,))
    # QAWO silently loses accuracy on very long intervals, so the tail is cut
    # into geometric segments
    lo = split
    while lo < upper:
        hi = min(upper, lo * _SEGMENT_RATIO)
        v1, e1 = _quad(amp_cos, lo, hi, weight="cos", wvar=0.5 * q)
        v2, e2 = _quad(amp_sin, lo, hi, weight="sin", wvar=0.5 * q)
        value += v1 - v2
        err += e1 + e2
        lo = hi
    if not (math.isfinite(value) and err <= _QUAD_FAIL):
        raise QuadratureError(
            f"Imhof quadrature did not converge at q={q:g} (error estimate {err:.2e})", abserr=err
        )
    return min(1.0, max(0.0, 0.5 - value / math.pi))


def wchi2_quantile(w: WeightedChiSquare, p: float, xi: float = DEFAULT_XI) -> float:
    """Smallest q with imhof_cdf(w, q, xi) >= p, by bracketed root finding."""
    if not 0 < p < 1:
        raise InputError(f"p must be in (0, 1), got {p}")
    wp = w.positive
    total = float(wp.sum())
    limit = total * 1e4
    hi = total * chi2_quantile(wp.size, p)
    while imhof_cdf(w, hi, xi) < p:
        hi *= 2.0
        if hi > limit:
            raise NumericalError(
                f"could not bracket the {p}-quantile below {limit:g}; weights look pathological"
            )
    f = lambda q: imhof_cdf(w, q, xi) - p  # noqa: E731
    return optimize.brentq(f, 0.0, hi, xtol=_QUANTILE_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)


def chi2_cdf(x, k):
    """Regularized lower incomplete gamma P(k/2, x/2)."""
    return special.gammainc(0.5 * np.asarray(k, dtype=float), 0.5 * np.maximum(x, 0.0))


def chi2_quantile(k, p):
    return 2.0 * special.gammaincinv(0.5 * np.asarray(k, dtype=float), p)


def chi2_va(k: int, p_a: float) -> float:
    """Variance-reduction factor of Mahalanobis rerandomization.

    v_a = P(chi2_{K+2} <= a) / P(chi2_K <= a) with a the p_a-quantile of chi2_K.
    """
    if int(k) != k or k < 1:
        raise InputError(f"K must be a positive integer, got {k}")
    if not 0 < p_a < 1:
        raise InputError(f"p_a must be in (0, 1), got {p_a}")
    a = chi2_quantile(k, p_a)
    return float(chi2_cdf(a, k + 2) / chi2_cdf(a, k))
