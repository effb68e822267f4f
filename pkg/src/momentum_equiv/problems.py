"""Reference problem instances used by the CLI, the scripts and the tests.

The random pieces (covariance diagonal, true model) come from fixed seeds so
every consumer builds the same numbers.
"""

from __future__ import annotations

import math

import numpy as np

from .data_stream import random_diagonal_covariance
from .risk_models import LogisticRiskSpec, QuadraticRiskSpec


def lms_problem(dim=10, r_low=0.5, r_high=2.0, noise_var=0.01, covariance_seed=0, w_star_seed=0, r_diag=None):
    """LMS model with ``R_u = diag(uniform[r_low, r_high])`` and ``w_star ~ N(0, I)``."""
    if r_diag is None:
        r_diag = random_diagonal_covariance(dim, r_low, r_high, covariance_seed)
    w_star = np.random.default_rng(w_star_seed).standard_normal(len(r_diag))
    return QuadraticRiskSpec(np.asarray(r_diag, dtype=float), w_star, math.sqrt(noise_var))


def logistic_problem(dim=10, r_low=0.5, r_high=2.0, rho=0.1, mean_scale=1.5, dataset_size=20000, covariance_seed=0, r_diag=None):
    """Two-Gaussian logistic model with class means ``+-mean_scale * 1``."""
    if r_diag is None:
        r_diag = random_diagonal_covariance(dim, r_low, r_high, covariance_seed)
    return LogisticRiskSpec(np.asarray(r_diag, dtype=float), rho, mean_scale, dataset_size)


def stability_problem(dim=5, r_scale=0.5, noise_var=0.01, w_star_seed=0):
    """Isotropic LMS model ``R_u = r_scale I`` used for the large-step stability comparison."""
    return lms_problem(noise_var=noise_var, w_star_seed=w_star_seed, r_diag=np.full(dim, r_scale))


def heterogeneous_step_profile(dim=10, low=0.25):
    """Diagonal step shape with entries spread evenly on ``[low, 1]``; its largest entry is 1."""
    return np.linspace(low, 1.0, dim)
