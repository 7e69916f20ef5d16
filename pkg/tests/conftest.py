import numpy as np
import pytest

from tradeoff_bandits import TradeoffParams, make_instance
from tradeoff_bandits.config import SYNTHETIC_ARMS

# Lines recorded by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def synthetic5():
    return make_instance(SYNTHETIC_ARMS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(rng, k, sigma_low=0.1, sigma_high=2.0):
    mu = rng.uniform(0.0, 5.0, size=k)
    var = rng.uniform(sigma_low, sigma_high, size=k) ** 2
    return make_instance(list(zip(mu, var)))


def random_point(rng, k, lambda_min=0.0):
    """Uniform point of the simplex restricted to ``lambda_min``."""
    x = rng.dirichlet(np.ones(k))
    return lambda_min + (1.0 - k * lambda_min) * x


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


__all__ = ["TradeoffParams", "random_instance", "random_point"]
