"""Covariate data, the mean-difference covariance and its spectrum."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, NumericalError

# eigenvalues below this fraction of the largest are treated as exact zeros
EIGEN_CLAMP = 1e-12
# eigenvector entries below this magnitude are skipped by the sign convention
_SIGN_TOL = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CovariateMatrix:
    """N x K covariate matrix plus the treatment-group size.

    Parameters
    ----------
    values : array_like, shape (N, K)
        Finite covariate values, one row per experimental unit.
    n_treated : int
        Number of treated units N_T; the remaining N - N_T are controls.
    names : tuple of str, optional
        Column names (only used in reports).
    """

    values: np.ndarray
    n_treated: int
    names: tuple = field(default=())

    def __post_init__(self):
        x = np.asarray(self.values, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
            raise InputError(f"covariates must be a non-empty N x K matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            i, j = np.argwhere(~np.isfinite(x))[0]
            raise InputError(f"non-finite covariate value at row {i + 1}, column {j + 1}")
        n_t = int(self.n_treated)
        if n_t != self.n_treated or not 1 <= n_t < x.shape[0]:
            raise InputError(f"n_treated must be an integer in [1, {x.shape[0] - 1}], got {self.n_treated}")
        names = tuple(self.names) or tuple(f"x{k + 1}" for k in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise InputError(f"{len(names)} column names for {x.shape[1]} columns")
        object.__setattr__(self, "values", _frozen(x))
        object.__setattr__(self, "n_treated", n_t)
        object.__setattr__(self, "names", names)

    @property
    def n_units(self) -> int:
        return self.values.shape[0]

    @property
    def n_control(self) -> int:
        return self.n_units - self.n_treated

    @property
    def n_covariates(self) -> int:
        return self.values.shape[1]

    def standardized(self) -> CovariateMatrix:
        """Copy with every column centred and scaled to unit sample variance."""
        x = self.values
        sd = x.std(axis=0, ddof=1)
        if np.any(sd == 0):
            k = int(np.flatnonzero(sd == 0)[0])
            raise InputError(f"cannot standardize constant column {k + 1} ({self.names[k]})")
        return CovariateMatrix((x - x.mean(axis=0)) / sd, self.n_treated, self.names)


@dataclass(frozen=True)
class Spectrum:
    """Sigma = Gamma Diag(eigenvalues) Gamma^T, eigenvalues non-increasing."""

    sigma: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        for name in ("sigma", "eigenvalues", "eigenvectors"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_covariates(self) -> int:
        return self.eigenvalues.shape[0]

    def is_singular(self, tol: float = 1e-10) -> bool:
        lam = self.eigenvalues
        return not lam[-1] > tol * lam[0]


def load_covariates(path, n_treated: int) -> CovariateMatrix:
    """Read a numeric CSV with one header row.

    Every malformed cell is reported with its 1-based data row and column.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"covariate file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise InputError(f"{path}: empty file (need a header row and at least one data row)")
    header, body = rows[0], rows[1:]
    k = len(header)
    values = np.empty((len(body), k))
    for i, row in enumerate(body, start=1):
        if len(row) != k:
            raise InputError(f"{path}: data row {i} has {len(row)} cells, header has {k}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}: non-numeric cell {cell.strip()!r} at data row {i}, column {j + 1} ({header[j].strip()})"
                ) from None
            if not math.isfinite(v):
                raise InputError(f"{path}: non-finite cell {cell.strip()!r} at data row {i}, column {j + 1}")
            values[i - 1, j] = v
    n = values.shape[0]
    if not 1 <= n_treated < n:
        raise InputError(f"n_treated={n_treated} out of range for {n} units (need 1 <= n_treated < {n})")
    return CovariateMatrix(values, n_treated, tuple(h.strip() for h in header))


def save_covariates(x: CovariateMatrix, path) -> None:
    """Write ``x`` as CSV; ``repr`` of floats round-trips bit-identically."""
    from ._io import atomic_write

    lines = [",".join(x.names)]
    lines += [",".join(repr(float(v)) for v in row) for row in x.values]
    atomic_write(path, "\n".join(lines) + "\n")


def compute_spectrum(x: CovariateMatrix) -> Spectrum:
    """Covariance of the covariate mean differences and its eigenstructure.

    Sigma = N / (N_T N_C) * S2, with S2 the sample covariance (divisor N - 1).
    """
    n, n_t, n_c = x.n_units, x.n_treated, x.n_control
    if n < 2:
        raise InputError("need at least two units")
    s2 = np.atleast_2d(np.cov(x.values, rowvar=False, ddof=1))
    sigma = n / (n_t * n_c) * s2
    sigma = 0.5 * (sigma + sigma.T)
    if not np.all(np.isfinite(sigma)):
        raise NumericalError("covariance of mean differences is not finite")
    lam, gamma = np.linalg.eigh(sigma)
    lam, gamma = lam[::-1].copy(), gamma[:, ::-1].copy()
    top = max(lam[0], 0.0)
    lam[lam < EIGEN_CLAMP * top] = 0.0
    for k in range(gamma.shape[1]):
        col = gamma[:, k]
        nz = np.flatnonzero(np.abs(col) > _SIGN_TOL)
        if nz.size and col[nz[0]] < 0:
            gamma[:, k] = -col
    return Spectrum(sigma, lam, gamma)


def check_assignment(w, n_units: int, n_treated: int) -> np.ndarray:
    w = np.asarray(w)
    if w.ndim != 1 or w.shape[0] != n_units:
        raise InputError(f"assignment has shape {w.shape}, expected ({n_units},)")
    if not np.all((w == 0) | (w == 1)):
        raise InputError("assignment entries must be 0 or 1")
    if int(w.sum()) != n_treated:
        raise InputError(f"assignment has {int(w.sum())} treated units, expected {n_treated}")
    return w.astype(np.int8)


def mean_difference(x: CovariateMatrix, w) -> np.ndarray:
    """Treated-minus-control covariate means for assignment ``w``."""
    w = check_assignment(w, x.n_units, x.n_treated).astype(float)
    return x.values.T @ w / x.n_treated - x.values.T @ (1.0 - w) / x.n_control


def mean_differences(x: CovariateMatrix, ws: np.ndarray) -> np.ndarray:
    """Batched :func:`mean_difference` for an (m, N) 0/1 matrix, no validation."""
    ws = np.asarray(ws, dtype=float)
    return ws @ x.values / x.n_treated - (1.0 - ws) @ x.values / x.n_control


def pc_mean_differences(s: Spectrum, d) -> np.ndarray:
    """Principal-component mean differences Gamma^T d (rows of a 2-D input)."""
    d = np.asarray(d, dtype=float)
    if d.shape[-1] != s.n_covariates:
        raise InputError(f"mean difference has {d.shape[-1]} entries, spectrum has {s.n_covariates}")
    return d @ s.eigenvectors
