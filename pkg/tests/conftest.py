import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pilotosd.codebook import DEFAULT_INTERLEAVER_SEED, DEFAULT_CODE
from pilotosd.link import Link
from pilotosd.phy import FrameGeometry

settings.register_profile(
    "pkg", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("pkg")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session", params=[1, 2, 3], ids=lambda p: f"np{p}")
def code_link(request):
    return Link.build(DEFAULT_CODE, 32, FrameGeometry(4, 13, request.param), DEFAULT_INTERLEAVER_SEED)


@pytest.fixture(scope="session")
def link_np2():
    return Link.build(DEFAULT_CODE, 32, FrameGeometry(4, 13, 2), DEFAULT_INTERLEAVER_SEED)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
