"""Seeded synthetic data: regression streams and two-Gaussian logistic datasets.

Every trial owns independent generators derived from ``(master_seed,
trial_index)`` through :class:`numpy.random.SeedSequence` spawn keys.  Each
generator draws one kind of variate only (regressors, noise, features, ...),
and numpy's ``Generator`` produces the same variates however the draws are
chunked, so a stream yields the same sequence whether it is read one sample at
a time or in large blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .risk_models import LabeledFeature, LogisticRiskSpec, QuadraticRiskSpec, Regression

__all__ = [
    "StreamSeed",
    "SampleStream",
    "RegressionStream",
    "DatasetStream",
    "make_regression_stream",
    "make_logistic_dataset",
    "make_logistic_stream",
    "random_diagonal_covariance",
]

# spawn-key slots, one per variate family
_U, _V, _FEAT, _SHUFFLE, _INDEX = range(5)


@dataclass(frozen=True)
class StreamSeed:
    master_seed: int
    trial_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.trial_index < 0:
            raise ValueError("trial_index must be nonnegative")

    def derive(self, slot: int) -> np.random.Generator:
        """Independent generator for variate family ``slot`` of this trial."""
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.trial_index, slot))
        return np.random.default_rng(ss)


class SampleStream:
    """Single-owner iterator over samples; ``position`` counts samples consumed."""

    def __init__(self, spec):
        self.spec = spec
        self.position = 0

    def take(self, n: int):
        """Next ``n`` samples as one batched sample (leading axis of length ``n``)."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        batch = self._draw(n)
        self.position += n
        return batch

    def next(self):
        return next(iter(self.take(1)))

    def __iter__(self):
        while True:
            yield self.next()

    def _draw(self, n):
        raise NotImplementedError


class RegressionStream(SampleStream):
    def __init__(self, spec: QuadraticRiskSpec, seed: StreamSeed):
        super().__init__(spec)
        self._rng_u = seed.derive(_U)
        self._rng_v = seed.derive(_V)
        self._scale = np.sqrt(spec.r_u_diag)

    def _draw(self, n):
        u = self._rng_u.standard_normal((n, self.spec.dim)) * self._scale
        v = self._rng_v.standard_normal(n) * self.spec.noise_std
        # row-wise reduction: a matrix-vector product may round differently per batch size
        return Regression(u, np.sum(u * self.spec.w_star, axis=-1) + v)


class DatasetStream(SampleStream):
    """Samples drawn uniformly with replacement from a fixed dataset."""

    def __init__(self, spec, dataset, seed: StreamSeed):
        super().__init__(spec)
        self.dataset = dataset
        self._rng = seed.derive(_INDEX)
        self._n = len(dataset)

    def _draw(self, n):
        # floor(U * n) from doubles keeps draws chunk-invariant (integers() buffers)
        idx = np.minimum((self._rng.random(n) * self._n).astype(np.int64), self._n - 1)
        return self.dataset.select(idx)


def make_regression_stream(spec: QuadraticRiskSpec, seed: StreamSeed) -> RegressionStream:
    """Stream of ``(u, d)`` with ``u ~ N(0, diag(R_u))`` and ``d = u^T w_star + v``."""
    return RegressionStream(spec, seed)


def make_logistic_dataset(spec: LogisticRiskSpec, seed: StreamSeed) -> LabeledFeature:
    """Balanced two-Gaussian dataset, shuffled deterministically by ``seed``."""
    n = spec.dataset_size
    if n % 2:
        raise ValueError("dataset_size must be even")
    half = n // 2
    gamma = np.concatenate([np.ones(half), -np.ones(half)])
    noise = seed.derive(_FEAT).standard_normal((n, spec.dim)) * np.sqrt(spec.r_h_diag)
    h = noise + spec.mean_scale * gamma[:, None]
    perm = seed.derive(_SHUFFLE).permutation(n)
    return LabeledFeature(h[perm], gamma[perm])


def make_logistic_stream(spec: LogisticRiskSpec, seed: StreamSeed, dataset=None) -> DatasetStream:
    if dataset is None:
        dataset = make_logistic_dataset(spec, seed)
    return DatasetStream(spec, dataset, seed)


def random_diagonal_covariance(dim: int, low: float = 0.5, high: float = 2.0, seed=0) -> np.ndarray:
    """``dim`` entries i.i.d. uniform on ``[low, high]``."""
    if not 0 < low <= high:
        raise ValueError("require 0 < low <= high")
    if dim < 1:
        raise ValueError("dim must be positive")
    return np.random.default_rng(seed).uniform(low, high, size=dim)
