"""Quadratic (LMS) and regularized logistic risks.

All gradient routines accept arrays with arbitrary leading batch axes, so a
stack of independent trials of shape ``(trials, M)`` can be advanced in one
call.  The last axis is always the parameter dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np
from scipy.special import expit

__all__ = [
    "QuadraticRiskSpec",
    "LogisticRiskSpec",
    "RiskSpec",
    "Regression",
    "LabeledFeature",
    "Sample",
    "TheoryConstants",
    "true_gradient",
    "loss_gradient",
    "pointwise_loss",
    "gradient_noise",
    "hessian_bounds",
    "compute_minimizer",
    "estimate_xi1",
    "ConvergenceError",
]


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver hits its iteration cap."""


@dataclass(frozen=True)
class QuadraticRiskSpec:
    """Mean-square-error risk ``J(w) = 0.5 E(d - u^T w)^2`` with diagonal ``R_u``.

    Data follow ``d = u^T w_star + v`` with ``u ~ N(0, diag(r_u_diag))`` and
    ``v ~ N(0, noise_std^2)``.
    """

    r_u_diag: np.ndarray
    w_star: np.ndarray
    noise_std: float = 0.1

    def __post_init__(self):
        r = np.asarray(self.r_u_diag, dtype=float)
        w = np.asarray(self.w_star, dtype=float)
        if r.ndim != 1 or w.shape != r.shape:
            raise ValueError("r_u_diag and w_star must be 1-D vectors of equal length")
        if not np.all(r > 0):
            raise ValueError("R_u must be positive definite (all diagonal entries > 0)")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        object.__setattr__(self, "r_u_diag", r)
        object.__setattr__(self, "w_star", w)

    @property
    def dim(self) -> int:
        return self.r_u_diag.shape[0]

    @property
    def r_du(self) -> np.ndarray:
        return self.r_u_diag * self.w_star


@dataclass(frozen=True)
class LogisticRiskSpec:
    """Regularized logistic risk over a balanced two-Gaussian feature model.

    Class ``+1`` features are ``N(+mean_scale * 1, diag(r_h_diag))`` and class
    ``-1`` features are ``N(-mean_scale * 1, diag(r_h_diag))``.
    """

    r_h_diag: np.ndarray
    rho: float = 0.1
    mean_scale: float = 1.5
    dataset_size: int = 20000

    def __post_init__(self):
        r = np.asarray(self.r_h_diag, dtype=float)
        if r.ndim != 1 or not np.all(r > 0):
            raise ValueError("r_h_diag must be a 1-D vector of positive entries")
        if not self.rho > 0:
            raise ValueError("rho must be > 0 (strong convexity)")
        if self.dataset_size < 2 or self.dataset_size % 2:
            raise ValueError("dataset_size must be a positive even integer (balanced classes)")
        object.__setattr__(self, "r_h_diag", r)

    @property
    def dim(self) -> int:
        return self.r_h_diag.shape[0]


RiskSpec = Union[QuadraticRiskSpec, LogisticRiskSpec]


@dataclass(frozen=True)
class Regression:
    """A regression datum ``(u, d)``; may carry leading batch axes."""

    u: np.ndarray
    d: np.ndarray

    def __len__(self):
        return np.shape(self.u)[0]

    def __iter__(self) -> Iterator["Regression"]:
        for k in range(len(self)):
            yield Regression(self.u[k], self.d[k])

    def select(self, idx) -> "Regression":
        return Regression(self.u[idx], self.d[idx])


@dataclass(frozen=True)
class LabeledFeature:
    """A classification datum ``(h, gamma)`` with ``gamma`` in ``{-1, +1}``."""

    h: np.ndarray
    gamma: np.ndarray

    def __len__(self):
        return np.shape(self.h)[0]

    def __iter__(self) -> Iterator["LabeledFeature"]:
        for k in range(len(self)):
            yield LabeledFeature(self.h[k], self.gamma[k])

    def select(self, idx) -> "LabeledFeature":
        return LabeledFeature(self.h[idx], self.gamma[idx])


Sample = Union[Regression, LabeledFeature]


@dataclass
class TheoryConstants:
    """Curvature bounds plus the empirically estimated noise constants.

    Only ``xi1`` (quadratic case) is estimated; the remaining moment constants
    of the gradient-noise assumptions are existence constants without a
    numerical recipe and are deliberately absent.
    """

    nu: float
    delta: float
    xi1_estimate: Optional[float] = None
    noise_floor: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.nu <= self.delta:
            raise ValueError("require 0 < nu <= delta")


def _check_dim(spec: RiskSpec, w: np.ndarray):
    if np.shape(w)[-1] != spec.dim:
        raise ValueError(f"dimension mismatch: expected last axis {spec.dim}, got {np.shape(w)}")


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _stack(samples) -> Sample:
    if isinstance(samples, (Regression, LabeledFeature)):
        return samples
    samples = list(samples)
    if not samples:
        raise ValueError("reference set is empty")
    if isinstance(samples[0], Regression):
        return Regression(np.stack([s.u for s in samples]), np.array([s.d for s in samples]))
    return LabeledFeature(np.stack([s.h for s in samples]), np.array([s.gamma for s in samples]))


def loss_gradient(spec: RiskSpec, w: np.ndarray, sample: Sample) -> np.ndarray:
    """Instantaneous gradient ``grad Q(w; sample)``.

    Quadratic: ``-u (d - u^T w)``.  Logistic: ``rho w - gamma h / (1 + exp(gamma h^T w))``.
    """
    _check_dim(spec, w)
    if isinstance(spec, QuadraticRiskSpec):
        if not isinstance(sample, Regression):
            raise TypeError("quadratic risk consumes Regression samples")
        err = sample.d - _dot(sample.u, w)
        return -sample.u * np.expand_dims(err, -1)
    if not isinstance(sample, LabeledFeature):
        raise TypeError("logistic risk consumes LabeledFeature samples")
    gamma = np.asarray(sample.gamma, dtype=float)
    margin = gamma * _dot(sample.h, w)
    # expit(-m) == 1 / (1 + exp(m)) without overflow for large |m|
    factor = expit(-margin) * gamma
    return spec.rho * w - sample.h * np.expand_dims(factor, -1)


def pointwise_loss(spec: RiskSpec, w: np.ndarray, sample: Sample) -> np.ndarray:
    """The loss ``Q(w; sample)`` whose gradient is :func:`loss_gradient`."""
    if isinstance(spec, QuadraticRiskSpec):
        return 0.5 * (sample.d - _dot(sample.u, w)) ** 2
    margin = np.asarray(sample.gamma, dtype=float) * _dot(sample.h, w)
    return 0.5 * spec.rho * _dot(w, w) + np.logaddexp(0.0, -margin)


def true_gradient(spec: RiskSpec, w: np.ndarray, reference_set=None) -> np.ndarray:
    """Gradient of the risk.

    Exact for the quadratic risk.  The logistic risk has no closed-form
    expectation, so the gradient is averaged over ``reference_set`` (a batched
    :class:`LabeledFeature` or a sequence of samples).
    """
    _check_dim(spec, w)
    if isinstance(spec, QuadraticRiskSpec):
        return spec.r_u_diag * (np.asarray(w, dtype=float) - spec.w_star)
    if reference_set is None:
        raise ValueError("logistic true_gradient requires a reference_set")
    data = _stack(reference_set)
    if len(data) == 0:
        raise ValueError("reference set is empty")
    w = np.asarray(w, dtype=float)
    factor = expit(-data.gamma * (data.h @ w)) * data.gamma
    return spec.rho * w - (factor @ data.h) / len(data)


def gradient_noise(spec: QuadraticRiskSpec, w: np.ndarray, sample: Regression) -> np.ndarray:
    """Closed-form LMS gradient noise ``(R_u - u u^T)(w_star - w) - u v``.

    The measurement noise is recovered from the sample as ``v = d - u^T w_star``.
    """
    if not isinstance(spec, QuadraticRiskSpec):
        raise TypeError("gradient noise is only available in closed form for quadratic risks")
    _check_dim(spec, w)
    u = sample.u
    v = sample.d - _dot(u, spec.w_star)
    err = spec.w_star - w
    return (
        spec.r_u_diag * err
        - u * np.expand_dims(_dot(u, err), -1)
        - u * np.expand_dims(v, -1)
    )


def hessian_bounds(spec: RiskSpec) -> tuple[float, float]:
    """Return ``(nu, delta)`` with ``nu I <= Hessian <= delta I`` everywhere.

    For the logistic risk ``nu = rho`` and ``delta = rho + lambda_max(E h h^T)``,
    where ``E h h^T = R_h + mean_scale^2 1 1^T`` for the two-Gaussian model.
    """
    if isinstance(spec, QuadraticRiskSpec):
        return float(spec.r_u_diag.min()), float(spec.r_u_diag.max())
    second_moment = np.diag(spec.r_h_diag) + spec.mean_scale**2 * np.ones((spec.dim, spec.dim))
    lam_max = float(np.linalg.eigvalsh(second_moment)[-1])
    return float(spec.rho), float(spec.rho) + lam_max


def compute_minimizer(
    spec: RiskSpec,
    dataset=None,
    tol: float = 1e-10,
    max_iter: int = 1_000_000,
    w0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Minimizer of the (empirical, for logistic) risk.

    The logistic case runs full-batch gradient descent with step
    ``2 / (L + rho)``, ``L = rho + lambda_max(H^T H / n) / 4`` being the exact
    smoothness constant of the empirical risk, until ``||grad|| < tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if isinstance(spec, QuadraticRiskSpec):
        return spec.w_star.copy()
    if dataset is None:
        raise ValueError("logistic minimizer requires a dataset")
    data = _stack(dataset)
    n = len(data)
    gram_max = float(np.linalg.eigvalsh(data.h.T @ data.h / n)[-1])
    lipschitz = spec.rho + 0.25 * gram_max
    step = 2.0 / (lipschitz + spec.rho)
    w = np.zeros(spec.dim) if w0 is None else np.array(w0, dtype=float)
    for _ in range(max_iter):
        g = true_gradient(spec, w, data)
        if np.linalg.norm(g) < tol:
            return w
        w = w - step * g
    raise ConvergenceError(f"gradient descent did not reach ||grad|| < {tol} in {max_iter} iterations")


def _spectral_norm_sym(r_diag: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``||diag(r) - u u^T||_2`` for each row of ``u`` (batched symmetric eigensolve)."""
    mats = np.einsum("ni,nj->nij", -u, u)
    idx = np.arange(u.shape[1])
    mats[:, idx, idx] += r_diag
    eig = np.linalg.eigvalsh(mats)
    return np.maximum(-eig[:, 0], eig[:, -1])


def estimate_xi1(
    spec: QuadraticRiskSpec,
    n_samples: int = 100_000,
    seed=0,
    chunk: int = 20_000,
    regressors: Optional[np.ndarray] = None,
) -> float:
    """Monte Carlo estimate of ``E ||R_u - u u^T||_2^2``.

    Regressors are drawn from ``N(0, R_u)`` unless an explicit ``(n, M)`` array
    of ``regressors`` is supplied.
    """
    if regressors is not None:
        u = np.asarray(regressors, dtype=float)
        return float(np.mean(_spectral_norm_sym(spec.r_u_diag, u) ** 2))
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(spec.r_u_diag)
    total = 0.0
    left = n_samples
    while left > 0:
        k = min(chunk, left)
        u = rng.standard_normal((k, spec.dim)) * scale
        total += float(np.sum(_spectral_norm_sym(spec.r_u_diag, u) ** 2))
        left -= k
    return total / n_samples
