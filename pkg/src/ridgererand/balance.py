"""Balance criteria: Mahalanobis, ridge Mahalanobis, Euclidean, truncated Mahalanobis.

Every quadratic form goes through the spectral decomposition of Sigma;
nothing here inverts a matrix explicitly.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Spectrum, pc_mean_differences
from .errors import InputError, SingularCovarianceError

SINGULAR_TOL = 1e-10


class Kind(str, enum.Enum):
    MAHALANOBIS = "mahalanobis"
    RIDGE = "ridge"
    EUCLIDEAN = "euclidean"
    TRUNCATED = "truncated"


@dataclass(frozen=True)
class BalanceCriterion:
    """Which distance to use and the acceptance threshold applied to it.

    ``lam`` is only meaningful for RIDGE and ``k_e`` only for TRUNCATED.
    """

    kind: Kind
    threshold: float
    lam: float = 0.0
    k_e: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not self.threshold >= 0:
            raise InputError(f"threshold must be >= 0, got {self.threshold}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise InputError(f"lambda must be a finite number >= 0, got {self.lam}")
        if self.kind is Kind.TRUNCATED:
            if self.k_e is None or int(self.k_e) != self.k_e or self.k_e < 1:
                raise InputError(f"truncated criterion needs an integer k_e >= 1, got {self.k_e}")
            object.__setattr__(self, "k_e", int(self.k_e))

    def values(self, d, s: Spectrum) -> np.ndarray:
        """Criterion value for each row of an (m, K) array of mean differences."""
        d = np.atleast_2d(np.asarray(d, dtype=float))
        if self.kind is Kind.EUCLIDEAN:
            return np.einsum("ij,ij->i", d, d)
        pc = pc_mean_differences(s, d)
        lam = s.eigenvalues
        if self.kind is Kind.TRUNCATED:
            _check_truncation(s, self.k_e)
            k = self.k_e
            return (pc[:, :k] ** 2 / lam[:k]).sum(axis=1)
        ridge = self.lam if self.kind is Kind.RIDGE else 0.0
        if ridge == 0 and s.is_singular(SINGULAR_TOL):
            raise SingularCovarianceError(
                "Sigma is singular (smallest eigenvalue "
                f"{lam[-1]:.3g} vs largest {lam[0]:.3g}); the Mahalanobis distance is undefined. "
                "Use the ridge criterion with lambda > 0."
            )
        return (pc ** 2 / (lam + ridge)).sum(axis=1)

    def value(self, d, s: Spectrum) -> float:
        return float(self.values(np.asarray(d, dtype=float)[None, :], s)[0])


def _check_truncation(s: Spectrum, k_e: int) -> None:
    lam = s.eigenvalues
    if not 1 <= k_e <= lam.shape[0]:
        raise InputError(f"k_e must be in [1, {lam.shape[0]}], got {k_e}")
    if not lam[k_e - 1] > SINGULAR_TOL * lam[0]:
        raise SingularCovarianceError(
            f"eigenvalue {k_e} of Sigma is numerically zero; choose k_e < {k_e}"
        )


def mahalanobis(d, s: Spectrum) -> float:
    """d^T Sigma^{-1} d; raises SingularCovarianceError when Sigma is singular."""
    return BalanceCriterion(Kind.MAHALANOBIS, math.inf).value(d, s)


def ridge_mahalanobis(d, s: Spectrum, lam: float) -> float:
    """d^T (Sigma + lam I)^{-1} d, evaluated as sum_k (Gamma^T d)_k^2 / (lambda_k + lam)."""
    return BalanceCriterion(Kind.RIDGE, math.inf, lam=lam).value(d, s)


def euclidean(d) -> float:
    d = np.asarray(d, dtype=float)
    return float(d @ d)


def truncated_mahalanobis(d, s: Spectrum, k_e: int) -> float:
    """Mahalanobis distance restricted to the leading ``k_e`` principal components."""
    return BalanceCriterion(Kind.TRUNCATED, math.inf, k_e=k_e).value(d, s)


def is_accepted(d, s: Spectrum, c: BalanceCriterion) -> bool:
    return c.value(d, s) <= c.threshold
