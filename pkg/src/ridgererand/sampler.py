"""Complete randomization and acceptance-rejection rerandomization."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .balance import BalanceCriterion
from .core import CovariateMatrix, Spectrum, mean_differences
from .errors import AcceptanceError, InputError

log = logging.getLogger(__name__)

_FIRST_BATCH = 16
_MAX_BATCH = 4096


def default_max_draws(p_a: float) -> int:
    return math.ceil(50 / p_a)


@dataclass(frozen=True)
class RerandomizationOutcome:
    assignment: np.ndarray
    draws_used: int
    criterion_value: float


def draw_assignment(n: int, n_treated: int, rng) -> np.ndarray:
    """One completely randomized 0/1 assignment with exactly ``n_treated`` ones."""
    if not 1 <= n_treated < n:
        raise InputError(f"need 1 <= n_treated < n, got n_treated={n_treated}, n={n}")
    w = np.zeros(n, dtype=np.int8)
    w[rng.permutation(n)[:n_treated]] = 1
    return w


def draw_assignments(n: int, n_treated: int, rng, size: int) -> np.ndarray:
    """``size`` independent complete randomizations as a (size, n) int8 matrix."""
    if not 1 <= n_treated < n:
        raise InputError(f"need 1 <= n_treated < n, got n_treated={n_treated}, n={n}")
    idx = rng.random((size, n)).argsort(axis=1)[:, :n_treated]
    w = np.zeros((size, n), dtype=np.int8)
    np.put_along_axis(w, idx, 1, axis=1)
    return w


def _batches(max_draws):
    used, b = 0, _FIRST_BATCH
    while used < max_draws:
        size = min(b, max_draws - used)
        yield size
        used += size
        b = min(2 * b, _MAX_BATCH)


def rerandomize(x: CovariateMatrix, s: Spectrum, c: Optional[BalanceCriterion], rng,
                max_draws: int = 500) -> RerandomizationOutcome:
    """Draw assignments until the first one satisfying ``c``.

    ``c=None`` means complete randomization (the first draw is accepted).
    Candidates are generated in batches, but the one returned is the first
    acceptable draw of the sequence, so the result is uniform over the
    acceptance region.
    """
    if max_draws < 1:
        raise InputError("max_draws must be >= 1")
    n, n_t = x.n_units, x.n_treated
    if c is None:
        return RerandomizationOutcome(draw_assignments(n, n_t, rng, 1)[0], 1, math.nan)
    used = 0
    best = math.inf
    for size in _batches(max_draws):
        ws = draw_assignments(n, n_t, rng, size)
        vals = c.values(mean_differences(x, ws), s)
        hits = np.flatnonzero(vals <= c.threshold)
        if hits.size:
            i = int(hits[0])
            log.debug("accepted after %d raw draws", used + i + 1)
            return RerandomizationOutcome(ws[i], used + i + 1, float(vals[i]))
        used += size
        best = min(best, float(vals.min()))
    raise AcceptanceError(
        f"no acceptable assignment in {max_draws} draws (smallest {c.kind.value} value {best:.4g}, "
        f"threshold {c.threshold:.4g})",
        draws=max_draws, min_value=best,
    )


def sample_accepted(x: CovariateMatrix, s: Spectrum, c: Optional[BalanceCriterion], rng,
                    count: int, max_draws: Optional[int] = None):
    """``count`` independent accepted assignments and the raw draws consumed.

    Equivalent in distribution to ``count`` successive :func:`rerandomize`
    calls; ``max_draws`` bounds the total raw draws.
    """
    n, n_t = x.n_units, x.n_treated
    if c is None:
        return draw_assignments(n, n_t, rng, count), count
    max_draws = max_draws if max_draws is not None else 500 * count
    out, got, used = [], 0, 0
    batch = max(_FIRST_BATCH, 2 * count)
    while got < count:
        if used >= max_draws:
            raise AcceptanceError(
                f"only {got} of {count} acceptable assignments in {used} draws", draws=used
            )
        size = min(batch, max_draws - used)
        ws = draw_assignments(n, n_t, rng, size)
        hits = np.flatnonzero(c.values(mean_differences(x, ws), s) <= c.threshold)
        if got + hits.size > count:
            hits = hits[: count - got]
            # raw draws are counted up to the last acceptance actually used
            used += int(hits[-1]) + 1
        else:
            used += size
        keep = ws[hits]
        out.append(keep)
        got += keep.shape[0]
        batch = min(2 * batch, 16 * _MAX_BATCH)
    return np.vstack(out), used
