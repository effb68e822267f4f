"""Plain SGD, the unified heavy-ball/Nesterov momentum recursion, and schedules.

Momentum iterates follow

    psi_{i-1} = w_{i-1} + beta1(i) (w_{i-1} - w_{i-2})
    w_i       = psi_{i-1} - mu_m grad Q(psi_{i-1}; theta_i) + beta2(i) (psi_{i-1} - psi_{i-2})

started from ``w_{-2} = psi_{-2} = w_init`` and one plain gradient step
``w_{-1} = w_{-2} - mu_m grad Q(w_{-2}; theta_{-1})``.  Heavy-ball is
``beta1 = 0, beta2 = beta``; Nesterov is ``beta1 = beta, beta2 = 0``.

Step sizes and momentum parameters may be scalars or length-M vectors (the
diagonal-matrix variants).  Iterates may carry leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from .risk_models import RiskSpec, Sample, loss_gradient

__all__ = [
    "SgdConfig",
    "MomentumConfig",
    "MomentumState",
    "BetaStairSchedule",
    "DecayingStepScale",
    "ConfigViolation",
    "sgd_step",
    "momentum_init",
    "momentum_step",
    "stair_beta",
    "decaying_step",
    "equivalent_stepsize",
    "validate_momentum_config",
]

Param = Union[float, np.ndarray]
Schedule = Union[float, np.ndarray, Callable[[int], Param]]


def _value(p: Schedule, i: int) -> Param:
    return p(i) if callable(p) else p


@dataclass(frozen=True)
class BetaStairSchedule:
    """Stair-wise decaying momentum: ``beta0`` on ``[1, T]``, then ``beta0 / (kT)^alpha``."""

    beta0: float
    T: int
    alpha: float

    def __post_init__(self):
        if not 0 <= self.beta0 < 1:
            raise ValueError("beta0 must lie in [0, 1)")
        if self.T < 1:
            raise ValueError("T must be a positive integer")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    def __call__(self, i: int) -> float:
        return stair_beta(i, self)


def stair_beta(i: int, sched: BetaStairSchedule) -> float:
    if i < 1:
        raise ValueError("stair schedule is indexed from i = 1")
    k = (i - 1) // sched.T
    if k == 0:
        return sched.beta0
    return sched.beta0 / (k * sched.T) ** sched.alpha


def decaying_step(i: int, mu: Param, beta_schedule: Schedule) -> Param:
    """``mu / (1 - beta(i))``."""
    beta = np.asarray(_value(beta_schedule, i), dtype=float)
    if np.any(beta >= 1) or np.any(beta < 0):
        raise ValueError("beta(i) must lie in [0, 1)")
    out = mu / (1.0 - beta)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class DecayingStepScale:
    """SGD step multiplier ``1 / (1 - beta(i))`` tracking a momentum schedule.

    Index 0 is the update paired with the momentum initialization step, which
    carries no momentum, so its multiplier is 1.
    """

    beta_schedule: Callable[[int], float]

    def __call__(self, i: int) -> float:
        if i == 0:
            return 1.0
        return decaying_step(i, 1.0, self.beta_schedule)


def equivalent_stepsize(mu_m: Param, beta: Param) -> Param:
    """SGD step ``mu_m / (1 - beta)`` matching momentum SGD (entrywise for vectors)."""
    beta = np.asarray(beta, dtype=float)
    if np.any(beta >= 1) or np.any(beta < 0):
        raise ValueError("momentum parameter beta must lie in [0, 1)")
    out = np.asarray(mu_m, dtype=float) / (1.0 - beta)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SgdConfig:
    step: Param
    step_schedule: Optional[Callable[[int], float]] = None

    def __post_init__(self):
        if np.any(np.asarray(self.step) <= 0):
            raise ValueError("SGD step-size entries must be > 0")

    def step_at(self, i: int) -> Param:
        if self.step_schedule is None:
            return self.step
        return self.step * self.step_schedule(i)


@dataclass(frozen=True)
class ConfigViolation:
    index: int
    reason: str

    def __str__(self):
        return f"momentum constraint violated at i={self.index}: {self.reason}"


def _check_betas(b1, b2, epsilon) -> Optional[str]:
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    for name, b in (("beta1", b1), ("beta2", b2)):
        if not np.all(np.isfinite(b)) or np.any(b < 0) or np.any(b >= 1):
            return f"{name} must lie in [0, 1)"
    if np.any(b1 * b2 != 0):
        return "beta1 * beta2 must be 0 (only one of heavy-ball / Nesterov may be active)"
    if np.any(b1 + b2 > 1 - epsilon):
        return f"beta = beta1 + beta2 must be <= 1 - epsilon = {1 - epsilon:g}"
    return None


@dataclass(frozen=True)
class MomentumConfig:
    """Unified momentum parameters.

    ``beta1``/``beta2`` are constants, length-M vectors, or callables of the
    1-based iteration index.  Constant parameters are validated here; schedules
    are checked by :func:`validate_momentum_config`.
    """

    step_m: Param
    beta1: Schedule = 0.0
    beta2: Schedule = 0.0
    epsilon: float = 0.05

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if np.any(np.asarray(self.step_m) < 0):
            raise ValueError("momentum step-size entries must be >= 0")
        if not (callable(self.beta1) or callable(self.beta2)):
            reason = _check_betas(self.beta1, self.beta2, self.epsilon)
            if reason:
                raise ValueError(f"momentum constraint violated: {reason}")

    @classmethod
    def heavy_ball(cls, step_m, beta, epsilon=0.05):
        return cls(step_m, 0.0, beta, epsilon)

    @classmethod
    def nesterov(cls, step_m, beta, epsilon=0.05):
        return cls(step_m, beta, 0.0, epsilon)

    def beta1_at(self, i: int) -> Param:
        return _value(self.beta1, i)

    def beta2_at(self, i: int) -> Param:
        return _value(self.beta2, i)

    def beta_at(self, i: int) -> Param:
        return self.beta1_at(i) + self.beta2_at(i)

    @property
    def is_scheduled(self) -> bool:
        return callable(self.beta1) or callable(self.beta2)

    @property
    def beta(self) -> Param:
        """Total momentum ``beta1 + beta2`` (constant configs only)."""
        if self.is_scheduled:
            raise ValueError("beta is not constant for a scheduled configuration")
        return self.beta1 + self.beta2


def validate_momentum_config(cfg: MomentumConfig, horizon: int) -> Optional[ConfigViolation]:
    """First ``i <= horizon`` breaking the momentum constraints, or ``None``."""
    last = horizon if cfg.is_scheduled else 1
    for i in range(1, last + 1):
        reason = _check_betas(cfg.beta1_at(i), cfg.beta2_at(i), cfg.epsilon)
        if reason:
            return ConfigViolation(i, reason)
    return None


@dataclass(frozen=True)
class MomentumState:
    """Momentum iterate window.

    ``w_cur``/``w_prev`` are ``w_{i-1}``/``w_{i-2}`` for the coming step.
    ``psi_cur`` is the extrapolated point used by the latest step (``None``
    right after initialization) and ``psi_prev`` the one before it.
    ``iter`` counts momentum steps taken after initialization.
    """

    w_cur: np.ndarray
    w_prev: np.ndarray
    psi_prev: np.ndarray
    psi_cur: Optional[np.ndarray] = None
    iter: int = 0


def sgd_step(w: np.ndarray, sample: Sample, cfg: SgdConfig, spec: RiskSpec, i: int = 0) -> np.ndarray:
    """``w - mu(i) grad Q(w; sample)``."""
    return w - cfg.step_at(i) * loss_gradient(spec, w, sample)


def momentum_init(w_init: np.ndarray, first_sample: Sample, cfg: MomentumConfig, spec: RiskSpec) -> MomentumState:
    w_init = np.asarray(w_init, dtype=float)
    w_cur = w_init - cfg.step_m * loss_gradient(spec, w_init, first_sample)
    return MomentumState(w_cur=w_cur, w_prev=w_init, psi_prev=w_init)


def momentum_step(state: MomentumState, sample: Sample, cfg: MomentumConfig, spec: RiskSpec) -> MomentumState:
    i = state.iter + 1
    b1 = cfg.beta1_at(i)
    b2 = cfg.beta2_at(i)
    # psi_{i-2}: the extrapolated point of the previous step
    psi_old = state.psi_prev if state.psi_cur is None else state.psi_cur
    psi = state.w_cur + b1 * (state.w_cur - state.w_prev)
    w_new = psi - cfg.step_m * loss_gradient(spec, psi, sample) + b2 * (psi - psi_old)
    return replace(state, w_cur=w_new, w_prev=state.w_cur, psi_prev=psi_old, psi_cur=psi, iter=i)
