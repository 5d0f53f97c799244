"""Synthetic designs and the randomization / rerandomization / ridge comparison study.

Per (K, rho) cell the covariates are drawn once and held fixed; each
replicate then draws one assignment per scheme, generates outcomes from a
noise stream shared by the three schemes, and optionally inverts a
randomization test for a confidence interval.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ._io import write_csv
from ._rng import substream
from .balance import BalanceCriterion, Kind
from .calibrate import CalibrationResult, DesignBudget, calibrate_criterion, select_lambda
from .core import CovariateMatrix, Spectrum, compute_spectrum, mean_differences
from .errors import AcceptanceError, InputError, RidgeRerandError
from .inference import OutcomeData, invert_ci, tau_hat
from .sampler import default_max_draws, rerandomize, sample_accepted
from .wchi2 import chi2_va

log = logging.getLogger(__name__)

SCHEMES = ("randomization", "rerandomization", "ridge")

METRIC_COLUMNS = [
    "K", "rho", "scheme", "status", "replications",
    "avg_variance_reduction", "avg_variance_reduction_se",
    "mse", "relative_mse", "relative_mse_se",
    "mean_ci_width", "relative_ci_width", "coverage", "coverage_se",
    "lambda_selected", "threshold", "acceptance_rate", "mean_draws", "message",
]


@dataclass(frozen=True)
class SimulationSpec:
    N: int = 100
    K_grid: tuple = (10, 30, 50)
    rho_grid: tuple = (0.0, 0.5, 0.9)
    beta_mode: Union[str, tuple] = "ones"
    outcome_model: str = "linear"
    tau: float = 1.0
    p_a: float = 0.1
    replications: int = 300
    seed: int = 0
    permutations: int = 499
    alpha: float = 0.05
    n_treated: Optional[int] = None
    n_mc: int = 1000
    delta: float = 0.01
    epsilon: float = 1e-4
    xi: float = 1e-4

    def __post_init__(self):
        errors = []
        if self.N < 4:
            errors.append("N must be >= 4")
        if not self.K_grid or any(int(k) != k or k < 1 for k in self.K_grid):
            errors.append("K_grid must list positive integers")
        if not self.rho_grid or any(not 0 <= r < 1 for r in self.rho_grid):
            errors.append("rho_grid values must lie in [0, 1)")
        if isinstance(self.beta_mode, str) and self.beta_mode not in ("ones", "worst_case"):
            errors.append("beta_mode must be 'ones', 'worst_case' or a coefficient vector")
        if self.outcome_model not in ("linear", "exponential"):
            errors.append("outcome_model must be 'linear' or 'exponential'")
        if not 0 < self.p_a < 1:
            errors.append("p_a must be in (0, 1)")
        if self.replications < 1:
            errors.append("replications must be >= 1")
        if self.permutations < 0:
            errors.append("permutations must be >= 0")
        if not 0 < self.alpha < 1:
            errors.append("alpha must be in (0, 1)")
        nt = self.N // 2 if self.n_treated is None else self.n_treated
        if not 1 <= nt < self.N:
            errors.append("n_treated must be in [1, N)")
        if errors:
            raise InputError("invalid simulation spec: " + "; ".join(errors))

    @property
    def treated(self) -> int:
        return self.N // 2 if self.n_treated is None else self.n_treated

    def budget(self) -> DesignBudget:
        return DesignBudget(p_a=self.p_a, xi=self.xi, n=self.n_mc, delta=self.delta,
                            epsilon=self.epsilon, seed=self.seed)


PRESETS = {
    "desk": SimulationSpec(),
    "full": SimulationSpec(K_grid=tuple(range(10, 100, 10)), rho_grid=tuple(i / 10 for i in range(10)),
                            replications=1000, permutations=999),
}


def equicorrelation(k: int, rho: float) -> np.ndarray:
    return np.full((k, k), rho) + (1.0 - rho) * np.eye(k)


def gen_covariates(n: int, k: int, rho: float, rng, n_treated: Optional[int] = None) -> CovariateMatrix:
    """N draws from N(0, C) with C the K x K equicorrelation matrix (unit variances)."""
    if not 0 <= rho < 1:
        raise InputError(f"rho must lie in [0, 1), got {rho}")
    # shared-factor construction: sqrt(rho) * f + sqrt(1 - rho) * e has covariance C
    f = rng.standard_normal((n, 1))
    e = rng.standard_normal((n, k))
    x = math.sqrt(rho) * f + math.sqrt(1.0 - rho) * e
    return CovariateMatrix(x, n // 2 if n_treated is None else n_treated)


def gen_outcomes(x: CovariateMatrix, w, beta, tau: float, model: str, rng) -> OutcomeData:
    """Y(0) ~ N(f(x) beta, 1), Y(1) = Y(0) + tau, with f the identity or exp."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (x.n_covariates,):
        raise InputError(f"beta has shape {beta.shape}, expected ({x.n_covariates},)")
    w = np.asarray(w)
    if w.shape != (x.n_units,):
        raise InputError(f"assignment has shape {w.shape}, expected ({x.n_units},)")
    if model == "linear":
        mean = x.values @ beta
    elif model == "exponential":
        mean = np.exp(x.values) @ beta
    else:
        raise InputError(f"unknown outcome model {model!r}")
    eps = rng.standard_normal(x.n_units)
    y0 = mean + eps
    return OutcomeData.from_potential(y0, y0 + tau, w, tau_true=tau, beta0=0.0, beta=beta, residuals=eps)


def worst_case_beta(s: Spectrum, p_a: float, lam: float, d_hat) -> np.ndarray:
    """Unit coefficient vector along the eigenvector minimising v_a - d_k.

    Ties go to the larger k (the later principal component). ``lam`` is the
    ridge parameter at which ``d_hat`` was estimated; it is only recorded.
    """
    d_hat = np.asarray(d_hat, dtype=float)
    gap = chi2_va(s.n_covariates, p_a) - d_hat
    k_star = len(gap) - 1 - int(np.argmin(gap[::-1]))
    log.debug("worst-case beta: k*=%d at lambda=%g", k_star + 1, lam)
    return s.eigenvectors[:, k_star].copy()


@dataclass
class SchemeRuns:
    """Per-replicate raw results of one scheme in one cell."""

    criterion: Optional[BalanceCriterion]
    tau_hats: np.ndarray
    mean_diffs: np.ndarray
    draws: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray


@dataclass
class CellResult:
    K: int
    rho: float
    tau: float
    spectrum: Spectrum
    calibration: Optional[CalibrationResult]
    beta: Optional[np.ndarray]
    runs: dict = field(default_factory=dict)
    error: Optional[str] = None
    seconds: float = 0.0

    def sq_errors(self, scheme) -> np.ndarray:
        return (self.runs[scheme].tau_hats - self.tau) ** 2

    def variance_ratios(self, scheme) -> np.ndarray:
        """Per-replicate mean over covariates of d_k^2 / Sigma_kk (expectation = average variance ratio)."""
        d = self.runs[scheme].mean_diffs
        return (d * d / np.diag(self.spectrum.sigma)).mean(axis=1)

    def avg_variance_reduction(self, scheme):
        g = self.variance_ratios(scheme)
        return 1.0 - g.mean(), g.std(ddof=1) / math.sqrt(g.size)

    def _rel_mse_influence(self, scheme):
        base = self.sq_errors("randomization")
        e = self.sq_errors(scheme)
        rel = e.mean() / base.mean()
        return rel, (e - rel * base) / base.mean()

    def relative_mse(self, scheme):
        rel, psi = self._rel_mse_influence(scheme)
        return rel, psi.std(ddof=1) / math.sqrt(psi.size)

    def relative_mse_difference(self, a, b):
        """relative MSE of ``a`` minus that of ``b`` with a paired delta-method SE."""
        ra, pa = self._rel_mse_influence(a)
        rb, pb = self._rel_mse_influence(b)
        diff = pa - pb
        return ra - rb, diff.std(ddof=1) / math.sqrt(diff.size)

    def variance_reduction_difference(self, a, b):
        va, sa = self.avg_variance_reduction(a)
        vb, sb = self.avg_variance_reduction(b)
        return va - vb, math.hypot(sa, sb)

    def ci_widths(self, scheme) -> np.ndarray:
        r = self.runs[scheme]
        return r.ci_upper - r.ci_lower

    def coverage(self, scheme) -> float:
        r = self.runs[scheme]
        return float(np.mean((r.ci_lower <= self.tau) & (self.tau <= r.ci_upper)))

    def metrics(self) -> list:
        rows = []
        if self.error is not None:
            for scheme in SCHEMES:
                rows.append({"K": self.K, "rho": self.rho, "scheme": scheme, "status": "failed",
                             "message": self.error})
            return rows
        for scheme, run in self.runs.items():
            n = run.tau_hats.size
            avr, avr_se = self.avg_variance_reduction(scheme)
            rel, rel_se = self.relative_mse(scheme)
            widths = self.ci_widths(scheme)
            have_ci = np.all(np.isfinite(widths))
            cov = self.coverage(scheme) if have_ci else math.nan
            c = run.criterion
            rows.append({
                "K": self.K, "rho": self.rho, "scheme": scheme, "status": "ok", "replications": n,
                "avg_variance_reduction": float(avr), "avg_variance_reduction_se": float(avr_se),
                "mse": float(self.sq_errors(scheme).mean()), "relative_mse": float(rel), "relative_mse_se": float(rel_se),
                "mean_ci_width": float(widths.mean()) if have_ci else math.nan,
                "relative_ci_width": (float(widths.mean() / self.ci_widths("randomization").mean())
                                      if have_ci else math.nan),
                "coverage": cov,
                "coverage_se": math.sqrt(cov * (1 - cov) / n) if have_ci else math.nan,
                "lambda_selected": (c.lam if c is not None and c.kind is Kind.RIDGE else
                                    (0.0 if c is not None else math.nan)),
                "threshold": c.threshold if c is not None else math.inf,
                "acceptance_rate": n / float(run.draws.sum()),
                "mean_draws": float(run.draws.mean()),
                "message": "",
            })
        return rows


def _beta_for(spec: SimulationSpec, s: Spectrum, cal: CalibrationResult) -> np.ndarray:
    k = s.n_covariates
    if isinstance(spec.beta_mode, str):
        if spec.beta_mode == "ones":
            return np.ones(k)
        return worst_case_beta(s, spec.p_a, cal.lambda_star, cal.d_hat)
    beta = np.asarray(spec.beta_mode, dtype=float)
    if beta.shape != (k,):
        raise InputError(f"custom beta has {beta.size} entries, cell has K={k}")
    return beta


def run_cell(spec: SimulationSpec, k: int, rho: float) -> CellResult:
    """Run all three schemes for one (K, rho) cell."""
    t0 = time.perf_counter()
    rho_key = f"{rho:.6g}"
    x = gen_covariates(spec.N, k, rho, substream(spec.seed, "covariates", k, rho_key), spec.treated)
    s = compute_spectrum(x)
    cell = CellResult(K=k, rho=rho, tau=spec.tau, spectrum=s, calibration=None, beta=None)
    try:
        cal = select_lambda(s, spec.budget())
        criteria = {
            "randomization": None,
            "rerandomization": calibrate_criterion(Kind.MAHALANOBIS, s, spec.p_a, xi=spec.xi),
            "ridge": BalanceCriterion(Kind.RIDGE, cal.threshold, lam=cal.lambda_star),
        }
        beta = _beta_for(spec, s, cal)
        cell.calibration, cell.beta = cal, beta
        max_draws = default_max_draws(spec.p_a)
        reps = spec.replications
        for scheme, c in criteria.items():
            taus = np.empty(reps)
            diffs = np.empty((reps, k))
            draws = np.empty(reps, dtype=int)
            lo = np.full(reps, np.nan)
            hi = np.full(reps, np.nan)
            for r in range(reps):
                out = rerandomize(x, s, c, substream(spec.seed, "sampling", k, rho_key, scheme, r), max_draws)
                w = out.assignment
                # same noise stream for every scheme: pairs the schemes within a replicate
                y = gen_outcomes(x, w, beta, spec.tau, spec.outcome_model,
                                 substream(spec.seed, "outcome", k, rho_key, r))
                taus[r] = tau_hat(y, w)
                diffs[r] = mean_differences(x, w[None, :])[0]
                draws[r] = out.draws_used
                if spec.permutations:
                    res = invert_ci(x, s, c, w, y, alpha=spec.alpha, reps=spec.permutations,
                                    rng=substream(spec.seed, "inference", k, rho_key, scheme, r))
                    lo[r], hi[r] = res.ci_lower, res.ci_upper
            cell.runs[scheme] = SchemeRuns(c, taus, diffs, draws, lo, hi)
    except (AcceptanceError, RidgeRerandError) as exc:
        log.warning("cell K=%d rho=%g failed: %s", k, rho, exc)
        cell.error = f"{type(exc).__name__}: {exc}"
    cell.seconds = time.perf_counter() - t0
    return cell


@dataclass
class StudyMetrics:
    spec: SimulationSpec
    cells: list

    @property
    def records(self) -> list:
        return [row for cell in self.cells for row in cell.metrics()]

    def cell(self, k, rho) -> CellResult:
        for c in self.cells:
            if c.K == k and math.isclose(c.rho, rho):
                return c
        raise KeyError((k, rho))

    def write_csv(self, path) -> None:
        rows = [[rec.get(col, "") for col in METRIC_COLUMNS] for rec in self.records]
        write_csv(path, METRIC_COLUMNS, rows)


def run_study(spec: SimulationSpec, progress=None) -> StudyMetrics:
    cells = []
    for k in spec.K_grid:
        for rho in spec.rho_grid:
            cell = run_cell(spec, int(k), float(rho))
            cells.append(cell)
            if progress is not None:
                progress(cell)
    return StudyMetrics(spec, cells)


FIGURE1_SCHEMES = ("randomization", "rerandomization", "ridge", "euclidean")


def figure1_demo(rng=None, *, seed: int = 0, draws: int = 1000, n: int = 100, p_a: float = 0.1,
                 lam: float = 0.005, xi: float = 1e-4):
    """Clouds of (xbar_T - xbar_C) for two correlated covariates under four schemes.

    Covariates: x1 ~ N(0, 1), x2 ~ N(x1, 1); N_T = N_C = n / 2. Returns a dict
    scheme -> (draws, 2) array of mean differences, plus the covariates.
    """
    rng = substream(seed, "figure1") if rng is None else rng
    x1 = rng.standard_normal(n)
    x2 = x1 + rng.standard_normal(n)
    x = CovariateMatrix(np.column_stack([x1, x2]), n // 2)
    s = compute_spectrum(x)
    criteria = {
        "randomization": None,
        "rerandomization": calibrate_criterion(Kind.MAHALANOBIS, s, p_a, xi=xi),
        "ridge": calibrate_criterion(Kind.RIDGE, s, p_a, lam=lam, xi=xi),
        "euclidean": calibrate_criterion(Kind.EUCLIDEAN, s, p_a, xi=xi),
    }
    clouds = {}
    for name, c in criteria.items():
        ws, _ = sample_accepted(x, s, c, rng, draws)
        clouds[name] = mean_differences(x, ws)
    return clouds, x


def write_figure1(clouds, path) -> None:
    rows = [(name, float(d[0]), float(d[1])) for name, cloud in clouds.items() for d in cloud]
    write_csv(path, ["scheme", "dx1", "dx2"], rows)
