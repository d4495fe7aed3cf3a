import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("harmep", deadline=None, derandomize=True, max_examples=50)
settings.load_profile("harmep")


def mc_z(samples, target):
    """Standardized distance of a sample mean from ``target``."""
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    return abs(samples.mean() - target) / se


def cov_z(x, y, target):
    """Standardized distance of the sample covariance of ``x`` and ``y`` from ``target``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    prod = (x - x.mean()) * (y - y.mean())
    se = prod.std(ddof=1) / np.sqrt(prod.size)
    return abs(prod.mean() - target) / se


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
