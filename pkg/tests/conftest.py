import numpy as np
import pytest
from hypothesis import settings, HealthCheck

settings.register_profile(
    "suite", max_examples=30, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


@pytest.fixture
def dom1():
    from nlhj.geometry import Domain
    return Domain((-1,), (1,))


@pytest.fixture
def dom2():
    from nlhj.geometry import Domain
    return Domain((-1, -1), (1, 1))


@pytest.fixture
def k05():
    from nlhj.kernels import fractional_laplacian_kernel
    return fractional_laplacian_kernel(0.5, 1)


@pytest.fixture
def k15():
    from nlhj.kernels import fractional_laplacian_kernel
    return fractional_laplacian_kernel(1.5, 1)


def grid_for(dom, h, r_max):
    from nlhj.geometry import Grid
    return Grid(dom, h, halo=int(np.floor(r_max / h + 1e-12)))
