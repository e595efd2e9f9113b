import numpy as np
import pytest
from hypothesis import HealthCheck, settings

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)

settings.register_profile(
    "ci",
    deadline=None,
    max_examples=40,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def finite_difference(f, x, h=1e-5):
    """Central-difference gradient, the independent oracle for analytic ones."""
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def gradient_close(analytic, numeric, rel=1e-5, abs_tol=1e-7):
    scale = np.maximum(np.abs(numeric), abs_tol / rel)
    return np.all(np.abs(analytic - numeric) <= rel * scale)
