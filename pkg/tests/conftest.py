import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from seqfill.experiments import ToySpec, toy_training_set
from seqfill.training import TrainConfig, gtm_fit, gtm_to_mixture

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_gtm():
    """1-D GTM (K=200, 9 basis functions) on 1000 noisy toy-curve samples, seed 1."""
    return gtm_fit(toy_training_set(ToySpec(seed=1)), TrainConfig(k=200, n_basis=9, latent_dim=1))


@pytest.fixture(scope="session")
def toy_gm(toy_gtm):
    return gtm_to_mixture(toy_gtm)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
