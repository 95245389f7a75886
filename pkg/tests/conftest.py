import numpy as np
import pytest
from hypothesis import settings

from diffinpaint import build_schedule
from diffinpaint.denoiser import DenoiserSpec, GaussianMixture, make_gmm_oracle, make_trainable_denoiser

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def schedule50():
    return build_schedule("linear", 50)


@pytest.fixture
def bimodal():
    return GaussianMixture([0.3, 0.7], [-1.5, 1.5], [0.3, 0.3])


@pytest.fixture
def bimodal_oracle(bimodal):
    return make_gmm_oracle(bimodal, build_schedule("linear", 50))


@pytest.fixture
def tiny_spec():
    return DenoiserSpec(data_channels=1, base_channels=8, channel_multipliers=(1, 2), norm_groups=4)


@pytest.fixture
def tiny_net(tiny_spec):
    return make_trainable_denoiser(tiny_spec, rng=0)


def standard_normal(shape, seed=0, dtype=np.float64):
    return np.random.default_rng(seed).standard_normal(shape).astype(dtype)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
