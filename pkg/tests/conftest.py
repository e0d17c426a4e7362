import numpy as np
import pytest

from subexp import (
    Domain,
    cauchy,
    exponential,
    fractional_exp,
    near_exponential,
    normalize,
    polynomial,
    weibull_type,
)


@pytest.fixture(scope="session")
def cauchy_spec():
    return cauchy()


@pytest.fixture(scope="session")
def pareto_type_spec():
    return polynomial(2.5)


@pytest.fixture(scope="session")
def pareto_type_normalized():
    return normalize(polynomial(2.5), Domain.POSITIVE_HALF_LINE)


@pytest.fixture(scope="session")
def weibull_normalized():
    return normalize(weibull_type(0.5), Domain.POSITIVE_HALF_LINE)


@pytest.fixture(scope="session")
def fracexp_spec():
    return fractional_exp(0.5)


@pytest.fixture(scope="session")
def nearexp_spec():
    return near_exponential(2.0)


@pytest.fixture(scope="session")
def exponential_spec():
    return exponential()


def cauchy_nfold(n: int, s) -> np.ndarray:
    """Closed form of the n-fold self-convolution of 1/(pi(1+s^2))."""
    s = np.asarray(s, dtype=float)
    return n / (np.pi * (n * n + s * s))
