import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ridgererand.balance import (
    BalanceCriterion,
    Kind,
    euclidean,
    is_accepted,
    mahalanobis,
    ridge_mahalanobis,
    truncated_mahalanobis,
)
from ridgererand.core import CovariateMatrix, compute_spectrum
from ridgererand.errors import InputError, SingularCovarianceError

from conftest import make_x


def test_diag_spectrum_fixture(diag_spectrum):
    np.testing.assert_allclose(diag_spectrum.sigma, np.diag([2.0, 1.0]), atol=1e-12)


def test_mahalanobis_examples(diag_spectrum):
    assert mahalanobis(np.zeros(2), diag_spectrum) == 0
    assert mahalanobis(np.array([2.0, 1.0]), diag_spectrum) == pytest.approx(3.0, rel=1e-12)


def test_identity_covariance_examples():
    # orthonormal-design columns give Sigma = I
    base = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]) * np.sqrt(0.75)
    s = compute_spectrum(CovariateMatrix(base, 2))
    np.testing.assert_allclose(s.sigma, np.eye(2), atol=1e-12)
    e1 = np.array([1.0, 0.0])
    assert mahalanobis(e1, s) == pytest.approx(1.0)
    assert ridge_mahalanobis(e1, s, 1.0) == pytest.approx(0.5)


def test_euclidean():
    assert euclidean(np.zeros(3)) == 0
    assert euclidean(np.array([3.0, 4.0])) == 25


def test_ridge_zero_equals_mahalanobis(s10, rng):
    d = rng.standard_normal(10) * 0.1
    assert ridge_mahalanobis(d, s10, 0.0) == mahalanobis(d, s10)


def test_ridge_large_lambda_tends_to_euclidean(s10, rng):
    d = rng.standard_normal(10)
    lam = 1e6 * s10.eigenvalues[0]
    assert lam * ridge_mahalanobis(d, s10, lam) == pytest.approx(euclidean(d), rel=1e-3)


def test_ridge_monotone_in_lambda(s10, rng):
    d = rng.standard_normal(10)
    vals = [ridge_mahalanobis(d, s10, lam) for lam in np.linspace(0, 5, 40)]
    assert np.all(np.diff(vals) <= 0)


def test_truncated_examples(s10, rng):
    d = rng.standard_normal(10)
    assert truncated_mahalanobis(d, s10, 10) == pytest.approx(mahalanobis(d, s10), rel=1e-12)
    # orthogonal to the first 4 eigenvectors
    orth = s10.eigenvectors[:, 4:] @ rng.standard_normal(6)
    assert truncated_mahalanobis(orth, s10, 4) == pytest.approx(0.0, abs=1e-10)


def test_truncated_matches_pseudo_inverse(rng):
    s = compute_spectrum(make_x(40, 3, 0.4))
    g, lam = s.eigenvectors, s.eigenvalues
    pinv = g @ np.diag([1 / lam[0], 1 / lam[1], 0.0]) @ g.T
    d = rng.standard_normal(3)
    assert truncated_mahalanobis(d, s, 2) == pytest.approx(d @ pinv @ d, rel=1e-10)


def test_truncated_range_checks(s10):
    with pytest.raises(InputError):
        truncated_mahalanobis(np.ones(10), s10, 11)
    with pytest.raises(InputError):
        BalanceCriterion(Kind.TRUNCATED, 1.0, k_e=0)


def test_singular_sigma_requires_ridge(rng):
    v = rng.standard_normal((20, 2))
    x = CovariateMatrix(np.column_stack([v, v[:, 0]]), 10)
    s = compute_spectrum(x)
    with pytest.raises(SingularCovarianceError, match="ridge"):
        mahalanobis(np.ones(3), s)
    with pytest.raises(SingularCovarianceError):
        ridge_mahalanobis(np.ones(3), s, 0.0)
    assert ridge_mahalanobis(np.ones(3), s, 0.1) > 0


def test_is_accepted(s10):
    c = BalanceCriterion(Kind.MAHALANOBIS, 0.0)
    assert is_accepted(np.zeros(10), s10, c)
    assert not is_accepted(np.full(10, 0.01), s10, c)


def test_criterion_validation():
    with pytest.raises(InputError):
        BalanceCriterion(Kind.RIDGE, -1.0)
    with pytest.raises(InputError):
        BalanceCriterion(Kind.RIDGE, 1.0, lam=-0.1)
    with pytest.raises(ValueError):
        BalanceCriterion("nonsense", 1.0)


KINDS = [
    BalanceCriterion(Kind.MAHALANOBIS, 1.0),
    BalanceCriterion(Kind.RIDGE, 1.0, lam=0.3),
    BalanceCriterion(Kind.EUCLIDEAN, 1.0),
    BalanceCriterion(Kind.TRUNCATED, 1.0, k_e=3),
]


@pytest.mark.parametrize("c", KINDS, ids=lambda c: c.kind.value)
def test_flip_symmetry_exact(c, x10, s10, rng):
    w = np.zeros(100, dtype=int)
    w[rng.permutation(100)[:50]] = 1
    ds = np.array([x10.values.T @ w / 50 - x10.values.T @ (1 - w) / 50,
                   x10.values.T @ (1 - w) / 50 - x10.values.T @ w / 50])
    v = c.values(ds, s10)
    assert v[0] == v[1]
    assert np.all(v >= 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_rotation_invariance(seed):
    rng = np.random.default_rng(seed)
    x = make_x(60, 4, 0.3, seed=seed % 97)
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    s, sq = compute_spectrum(x), compute_spectrum(CovariateMatrix(x.values @ q, x.n_treated))
    d = rng.standard_normal(4) * 0.2
    dq = d @ q
    assert mahalanobis(dq, sq) == pytest.approx(mahalanobis(d, s), rel=1e-8)
    assert ridge_mahalanobis(dq, sq, 0.05) == pytest.approx(ridge_mahalanobis(d, s, 0.05), rel=1e-8)
    assert euclidean(dq) == pytest.approx(euclidean(d), rel=1e-8)


def test_affine_invariance_mahalanobis_only(x10, s10, rng):
    a = rng.standard_normal((10, 10)) + 3 * np.eye(10)
    sa = compute_spectrum(CovariateMatrix(x10.values @ a, x10.n_treated))
    d = rng.standard_normal(10) * 0.1
    assert mahalanobis(d @ a, sa) == pytest.approx(mahalanobis(d, s10), rel=1e-7)
    assert euclidean(d @ a) != pytest.approx(euclidean(d), rel=1e-3)
