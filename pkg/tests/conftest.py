import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from oempc import oracle, plant  # noqa: E402
from oempc.harness.config import ExperimentConfig  # noqa: E402
from oempc.harness import pipeline  # noqa: E402
from oempc.narx import RegressorSpec  # noqa: E402
from oempc.sstarget import sweep_model  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return plant.PlantParams()


@pytest.fixture(scope="session")
def nominal_params():
    return plant.PlantParams(noise_std_frac=0.0)


@pytest.fixture(scope="session")
def spec():
    return RegressorSpec()


@pytest.fixture(scope="session")
def target(params):
    return sweep_model(params)


@pytest.fixture(scope="session")
def cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def nominal_cfg():
    return ExperimentConfig(plant=plant.PlantParams(noise_std_frac=0.0))


@pytest.fixture(scope="session")
def chirp_oracle(cfg):
    """Noisy chirp-trained oracle at the closed-loop stride."""
    return pipeline.trained_oracle(cfg, cfg.seeds[0])


@pytest.fixture(scope="session")
def nominal_oracle(nominal_cfg):
    """Noise-free chirp-trained oracle at the closed-loop stride."""
    return pipeline.trained_oracle(nominal_cfg, nominal_cfg.seeds[0])


@pytest.fixture
def small_dataset(spec):
    rng = np.random.default_rng(3)
    Q = rng.uniform(-1, 1, (60, spec.n_z + spec.m))
    y = np.sin(Q).sum(axis=1)
    return oracle.Dataset(spec, Q, y)


# acceptance verdicts, printed as one block at the end of the session
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
