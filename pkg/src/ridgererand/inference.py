"""Mean-difference estimation and randomization inference under a balance criterion."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._io import write_csv
from .balance import BalanceCriterion
from .core import CovariateMatrix, Spectrum, check_assignment
from .errors import InputError
from .sampler import sample_accepted

DEFAULT_REPS = 999
GRID_POINTS = 201
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class OutcomeData:
    """Observed outcomes, optionally with the full potential-outcome table.

    When ``y0``, ``y1`` and ``assignment`` are all present, ``y_obs`` must
    equal ``w * y1 + (1 - w) * y0``.
    """

    y_obs: np.ndarray
    y0: Optional[np.ndarray] = None
    y1: Optional[np.ndarray] = None
    assignment: Optional[np.ndarray] = None
    tau_true: Optional[float] = None
    beta0: float = 0.0
    beta: Optional[np.ndarray] = None
    residuals: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.asarray(self.y_obs, dtype=float)
        if y.ndim != 1 or not np.all(np.isfinite(y)):
            raise InputError("y_obs must be a finite 1-D vector")
        object.__setattr__(self, "y_obs", y)
        if self.y0 is not None and self.y1 is not None and self.assignment is not None:
            w = np.asarray(self.assignment)
            expected = np.where(w == 1, self.y1, self.y0)
            if not np.array_equal(expected, y):
                raise InputError("y_obs is inconsistent with the assignment and potential outcomes")

    @classmethod
    def from_potential(cls, y0, y1, w, **kw) -> OutcomeData:
        y0, y1 = np.asarray(y0, dtype=float), np.asarray(y1, dtype=float)
        w = np.asarray(w)
        return cls(np.where(w == 1, y1, y0), y0=y0, y1=y1, assignment=w, **kw)

    def observe(self, w) -> OutcomeData:
        """Same potential outcomes observed under another assignment."""
        if self.y0 is None or self.y1 is None:
            raise InputError("potential outcomes are not available")
        return OutcomeData.from_potential(self.y0, self.y1, w, tau_true=self.tau_true, beta0=self.beta0,
                                          beta=self.beta, residuals=self.residuals)


@dataclass(frozen=True)
class InferenceResult:
    tau_hat: float
    p_value: float
    ci_lower: float
    ci_upper: float
    replications: int
    alpha: float
    tau0: float = 0.0
    grid: np.ndarray = field(default=None, repr=False)
    profile: np.ndarray = field(default=None, repr=False)
    grid_truncated: bool = False

    @property
    def ci_width(self) -> float:
        return self.ci_upper - self.ci_lower

    def covers(self, tau: float) -> bool:
        return self.ci_lower <= tau <= self.ci_upper

    def to_dict(self) -> dict:
        return {
            "tau_hat": self.tau_hat,
            "tau0": self.tau0,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "replications": self.replications,
            "grid_truncated": self.grid_truncated,
        }

    def write_profile(self, path) -> None:
        write_csv(path, ["tau0", "p_value"], zip(self.grid.tolist(), self.profile.tolist()))


class EmptyConfidenceSet(InputError):
    """No grid point survives the test; carries the p-value profile for reporting."""

    def __init__(self, message, *, tau_hat, p_value, grid, profile):
        super().__init__(message)
        self.tau_hat, self.p_value, self.grid, self.profile = tau_hat, p_value, grid, profile


def _y(y) -> np.ndarray:
    return y.y_obs if isinstance(y, OutcomeData) else np.asarray(y, dtype=float)


def _diff(v, ws, n_t, n_c):
    # treated-minus-control means of v for each row of ws
    ws = np.asarray(ws, dtype=float)
    tot = v.sum()
    treated = ws @ v
    return treated / n_t - (tot - treated) / n_c


def tau_hat(y, w) -> float:
    """Mean-difference estimator ybar_T - ybar_C."""
    y = _y(y)
    w = np.asarray(w)
    if y.shape != w.shape:
        raise InputError(f"outcomes have length {y.shape[0]}, assignment {w.shape[0]}")
    n_t = int(w.sum())
    if not 0 < n_t < w.shape[0]:
        raise InputError("assignment must have both treated and control units")
    return float(y[w == 1].mean() - y[w == 0].mean())


def default_grid(y, w, points: int = GRID_POINTS) -> np.ndarray:
    """tau_hat +/- 5 sd(y_obs) / sqrt(N), ``points`` equispaced values."""
    y = _y(y)
    centre = tau_hat(y, w)
    half = 5.0 * y.std(ddof=1) / math.sqrt(y.shape[0])
    return np.linspace(centre - half, centre + half, points)


class _Reference:
    """Replicate statistics as a linear function of the hypothesised effect.

    Under the sharp null Y(1) = Y(0) + tau0, the centred statistic of a
    hypothetical assignment w_m is  diff(y_obs, w_m) - tau0 * diff(w_obs, w_m).
    """

    def __init__(self, x, s, c, w_obs, y, reps, rng, max_draws=None):
        if reps < 1:
            raise InputError("need at least one replication")
        w_obs = check_assignment(w_obs, x.n_units, x.n_treated)
        y = _y(y)
        if y.shape[0] != x.n_units:
            raise InputError(f"outcomes have length {y.shape[0]}, covariates {x.n_units} rows")
        ws, _ = sample_accepted(x, s, c, rng, reps, max_draws)
        n_t, n_c = x.n_treated, x.n_control
        self.reps = reps
        self.tau_hat = tau_hat(y, w_obs)
        self.a = _diff(y, ws, n_t, n_c)
        self.b = _diff(w_obs.astype(float), ws, n_t, n_c)
        self.scale = float(np.abs(y).max())

    def pvalues(self, tau0) -> np.ndarray:
        tau0 = np.atleast_1d(np.asarray(tau0, dtype=float))
        t_obs = np.abs(self.tau_hat - tau0)
        t = np.abs(self.a[None, :] - tau0[:, None] * self.b[None, :])
        # replicates at least as extreme as observed; the tolerance makes
        # floating-point ties count as ties
        tol = _TIE_RTOL * (self.scale + np.abs(tau0))
        exceed = (t >= (t_obs - tol)[:, None]).sum(axis=1)
        return (1.0 + exceed) / (self.reps + 1.0)


def randomization_pvalue(x: CovariateMatrix, s: Spectrum, c: Optional[BalanceCriterion], w_obs, y,
                         tau0: float, reps: int, rng, max_draws: Optional[int] = None) -> float:
    """Randomization p-value for the sharp null of a constant effect ``tau0``.

    The ``reps`` hypothetical assignments are drawn under the same criterion
    (and threshold) as the observed design; ``c=None`` is complete randomization.
    """
    ref = _Reference(x, s, c, w_obs, y, reps, rng, max_draws)
    return float(ref.pvalues(tau0)[0])


def invert_ci(x: CovariateMatrix, s: Spectrum, c: Optional[BalanceCriterion], w_obs, y,
              alpha: float = 0.05, reps: int = DEFAULT_REPS, rng=None, grid=None, tau0: float = 0.0,
              max_draws: Optional[int] = None) -> InferenceResult:
    """Confidence interval as the set of grid effects whose sharp null is not rejected.

    The interval reported is [min, max] of the grid points with p >= alpha.
    One set of hypothetical assignments serves every grid point.
    """
    if not 0 < alpha < 1:
        raise InputError(f"alpha must be in (0, 1), got {alpha}")
    if rng is None:
        raise InputError("an explicit random generator is required")
    ref = _Reference(x, s, c, w_obs, y, reps, rng, max_draws)
    if grid is None:
        grid = default_grid(y, w_obs)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) < 0):
        raise InputError("grid must be a non-empty sorted vector")
    prof = ref.pvalues(grid)
    keep = np.flatnonzero(prof >= alpha)
    if keep.size == 0:
        raise EmptyConfidenceSet(
            f"no grid point has p >= {alpha}; the confidence set on this grid is empty",
            tau_hat=ref.tau_hat, p_value=float(ref.pvalues(tau0)[0]), grid=grid, profile=prof,
        )
    return InferenceResult(
        tau_hat=ref.tau_hat,
        p_value=float(ref.pvalues(tau0)[0]),
        ci_lower=float(grid[keep[0]]),
        ci_upper=float(grid[keep[-1]]),
        replications=reps,
        alpha=alpha,
        tau0=tau0,
        grid=grid,
        profile=prof,
        grid_truncated=bool(grid.size > 1 and (keep[0] == 0 or keep[-1] == grid.size - 1)),
    )
