import pytest

from hdaloha.core import validate_params


@pytest.fixture
def params_a():
    return validate_params(0.1, 0.1, 0.5, 0.5)


@pytest.fixture
def params_b():
    return validate_params(0.2, 0.1, 0.6, 0.4)


@pytest.fixture
def params_high():
    return validate_params(0.19, 0.19, 0.5, 0.5)
