import pytest

from core.data_io import make_synthetic


@pytest.fixture
def regression_data():
    return make_synthetic("regression", n=30, d=4, seed=0, noise=0.5)


@pytest.fixture
def binary_data():
    return make_synthetic("binary", n=30, d=4, seed=1)


@pytest.fixture
def multiclass_data():
    return make_synthetic("multiclass", n=30, d=3, seed=2, num_classes=3)
