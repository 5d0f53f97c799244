import numpy as np
import pytest

from ridgererand._rng import substream
from ridgererand.core import CovariateMatrix, compute_spectrum
from ridgererand.simulate import gen_covariates

ACCEPTANCE_COUNT = 13
_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Criterion number -> (passed, detail); printed in the terminal summary."""
    return request.config.stash[_RESULTS]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_COUNT + 1):
        if n in results:
            ok, detail = results[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_x(n=100, k=10, rho=0.5, seed=0, n_treated=None):
    return gen_covariates(n, k, rho, substream(seed, "test-covariates", k), n_treated)


@pytest.fixture
def x10():
    return make_x()


@pytest.fixture
def s10(x10):
    return compute_spectrum(x10)


@pytest.fixture
def diag_spectrum():
    """Spectrum with Sigma = Diag(2, 1), built from a tiny exact design."""
    # columns are orthogonal with sample variances chosen so Sigma = Diag(2, 1)
    base = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    x = CovariateMatrix(base, 2)
    s = compute_spectrum(x)
    scale = np.sqrt(np.array([2.0, 1.0]) / np.diag(s.sigma))
    return compute_spectrum(CovariateMatrix(base * scale, 2))
