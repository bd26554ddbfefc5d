import numpy as np
import pytest

from activefl.model import ClientDataset, ModelParams


def random_model(rng, d, scale=1.0):
    return ModelParams(rng.normal(scale=scale, size=d), rng.normal(scale=scale))


def random_dataset(rng, n, d):
    return ClientDataset(rng.normal(size=(n, d)), rng.integers(0, 2, size=n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
