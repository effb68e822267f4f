"""Transformed error coordinates of the momentum recursion.

With errors ``e_i = w_star - w_i`` the change of variables

    w_hat_i   = (e_i - beta e_{i-1}) / (1 - beta)
    w_check_i = (e_i - e_{i-1}) / (1 - beta)

turns the second-order momentum error recursion into a first-order one.  For
quadratic risks that first-order recursion is linear with constant blocks built
from ``R_u`` and is implemented by :func:`extended_recursion_step`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .risk_models import QuadraticRiskSpec, Regression, gradient_noise

__all__ = [
    "TransformedPair",
    "beta_prime",
    "to_transformed",
    "from_transformed",
    "extended_recursion_step",
    "consistency_deviation",
]


@dataclass(frozen=True)
class TransformedPair:
    w_hat: np.ndarray
    w_check: np.ndarray


def _check_beta(beta):
    if np.any(np.asarray(beta) >= 1) or np.any(np.asarray(beta) < 0):
        raise ValueError("beta must lie in [0, 1)")


def beta_prime(beta1: float, beta2: float) -> float:
    """Effective coupling ``beta * beta1 + beta2``: beta for heavy-ball, beta^2 for Nesterov."""
    return (beta1 + beta2) * beta1 + beta2


def to_transformed(w_tilde_i, w_tilde_prev, beta) -> TransformedPair:
    _check_beta(beta)
    scale = 1.0 / (1.0 - beta)
    return TransformedPair(
        w_hat=scale * (w_tilde_i - beta * w_tilde_prev),
        w_check=scale * (w_tilde_i - w_tilde_prev),
    )


def from_transformed(pair: TransformedPair, beta):
    """Inverse map: ``e_i = w_hat - beta w_check`` and ``e_{i-1} = w_hat - w_check``."""
    _check_beta(beta)
    return pair.w_hat - beta * pair.w_check, pair.w_hat - pair.w_check


def extended_recursion_step(
    pair: TransformedPair,
    sample: Regression,
    spec: QuadraticRiskSpec,
    mu_m: float,
    beta: float,
    beta_prime: float,
    psi_point: np.ndarray,
) -> TransformedPair:
    """One step of the first-order transformed recursion for a quadratic risk.

    The gradient noise driving both blocks is evaluated at ``psi_point`` (the
    extrapolated momentum iterate) with ``sample``.
    """
    if not isinstance(spec, QuadraticRiskSpec):
        raise TypeError("the extended recursion has constant blocks only for quadratic risks")
    _check_beta(beta)
    c = mu_m / (1.0 - beta)
    r = spec.r_u_diag
    drive = c * gradient_noise(spec, psi_point, sample)
    r_hat = r * pair.w_hat
    r_check = r * pair.w_check
    w_hat = pair.w_hat - c * r_hat + c * beta_prime * r_check + drive
    w_check = -c * r_hat + beta * pair.w_check + c * beta_prime * r_check + drive
    return TransformedPair(w_hat, w_check)


def consistency_deviation(spec: QuadraticRiskSpec, cfg, steps: int, seed: int = 0, w_init=None) -> float:
    """Largest relative gap between transformed momentum errors and the extended recursion.

    A single momentum-LMS trajectory is simulated directly; its errors are
    mapped through :func:`to_transformed` and compared, step by step, with
    :func:`extended_recursion_step` driven by the same samples and evaluated at
    the same extrapolated points.
    """
    from .data_stream import StreamSeed, make_regression_stream
    from .optimizers import momentum_init, momentum_step

    beta = cfg.beta
    bp = beta_prime(cfg.beta1, cfg.beta2)
    stream = make_regression_stream(spec, StreamSeed(seed))
    w0 = np.zeros(spec.dim) if w_init is None else np.asarray(w_init, dtype=float)
    state = momentum_init(w0, stream.next(), cfg, spec)
    pair = to_transformed(spec.w_star - state.w_cur, spec.w_star - state.w_prev, beta)
    worst = 0.0
    for _ in range(steps):
        sample = stream.next()
        state = momentum_step(state, sample, cfg, spec)
        pair = extended_recursion_step(pair, sample, spec, cfg.step_m, beta, bp, state.psi_cur)
        direct = to_transformed(spec.w_star - state.w_cur, spec.w_star - state.w_prev, beta)
        ref = np.concatenate([direct.w_hat, direct.w_check])
        gap = np.concatenate([direct.w_hat - pair.w_hat, direct.w_check - pair.w_check])
        worst = max(worst, float(np.linalg.norm(gap) / np.linalg.norm(ref)))
    return worst
