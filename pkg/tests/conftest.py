import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bogovskii.bump import Mollifier
from bogovskii.geometry import Ball, StarDomain
from bogovskii.kernel import KernelContext
from bogovskii.quadrature import QuadConfig

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def disk():
    """Omega = ball(0, 2) in R^2 with the unit ball as mollifier support."""
    return StarDomain.ball((0, 0), 2.0, Ball((0, 0), 1.0))


@pytest.fixture(scope="session")
def ctx2(disk):
    return KernelContext(Mollifier(disk.center_ball), disk, QuadConfig())


@pytest.fixture(scope="session")
def ctx3():
    dom = StarDomain.box((-1, -1, -1), (1, 1.5, 1), Ball((0, 0, 0), 0.5))
    return KernelContext(Mollifier(dom.center_ball), dom, QuadConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
