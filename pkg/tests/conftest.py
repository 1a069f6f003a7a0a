import pytest

from rdips.graph_kernel import ExpWeight, PowWeight, finite_path, self_loop, zd_nn


@pytest.fixture
def z1_exp():
    return zd_nn(1, ExpWeight(1.0))


@pytest.fixture
def z1_pow2():
    return zd_nn(1, PowWeight(2))


@pytest.fixture
def loop():
    return self_loop()


@pytest.fixture
def path3():
    return finite_path(3)
