import numpy as np
import pytest

from momentum_equiv.problems import lms_problem, logistic_problem, stability_problem
from momentum_equiv.risk_models import QuadraticRiskSpec


@pytest.fixture(scope="session")
def lms_spec():
    return lms_problem()


@pytest.fixture(scope="session")
def logistic_spec():
    return logistic_problem()


@pytest.fixture(scope="session")
def small_logistic_spec():
    return logistic_problem(dataset_size=2000)


@pytest.fixture(scope="session")
def stability_spec():
    return stability_problem()


@pytest.fixture
def scalar_spec():
    """1-D noiseless quadratic with ``R_u = 1`` and ``w_star = 1``."""
    return QuadraticRiskSpec(np.array([1.0]), np.array([1.0]), 0.0)
