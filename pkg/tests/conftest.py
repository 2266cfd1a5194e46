import numpy as np
import pytest

from ccopf.grid import builtin_case, compute_ptdf


@pytest.fixture(scope="session")
def case3():
    return builtin_case("case3")


@pytest.fixture(scope="session")
def case14():
    return builtin_case("case14")


@pytest.fixture(scope="session")
def case118():
    return builtin_case("case118")


@pytest.fixture(scope="session")
def ptdf3(case3):
    return compute_ptdf(case3)


@pytest.fixture(scope="session")
def ptdf14(case14):
    return compute_ptdf(case14)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
