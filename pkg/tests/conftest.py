import pytest

from doiedwards.sphere import KappaTensor, build_grid


@pytest.fixture(scope="session")
def grid8():
    return build_grid(8)


@pytest.fixture(scope="session")
def shear():
    return KappaTensor.shear()
