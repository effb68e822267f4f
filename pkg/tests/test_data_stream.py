import numpy as np
import pytest

from momentum_equiv.data_stream import (
    StreamSeed,
    make_logistic_dataset,
    make_logistic_stream,
    make_regression_stream,
    random_diagonal_covariance,
)
from momentum_equiv.problems import lms_problem, logistic_problem
from momentum_equiv.risk_models import LogisticRiskSpec, QuadraticRiskSpec


def test_seed_validation():
    with pytest.raises(ValueError):
        StreamSeed(-1)
    with pytest.raises(ValueError):
        StreamSeed(0, -3)


def test_noiseless_stream_is_exact():
    spec = lms_problem(noise_var=0.0)
    batch = make_regression_stream(spec, StreamSeed(4)).take(500)
    np.testing.assert_array_equal(batch.d, np.sum(batch.u * spec.w_star, axis=1))


def test_same_seed_same_samples(lms_spec):
    a = make_regression_stream(lms_spec, StreamSeed(8, 2))
    b = make_regression_stream(lms_spec, StreamSeed(8, 2))
    for _ in range(100):
        x, y = a.next(), b.next()
        assert np.array_equal(x.u, y.u) and x.d == y.d


def test_trials_are_independent(lms_spec):
    a = make_regression_stream(lms_spec, StreamSeed(8, 0)).take(50)
    b = make_regression_stream(lms_spec, StreamSeed(8, 1)).take(50)
    assert not np.array_equal(a.u, b.u)


def test_chunking_does_not_change_samples(lms_spec):
    whole = make_regression_stream(lms_spec, StreamSeed(1)).take(300)
    s = make_regression_stream(lms_spec, StreamSeed(1))
    parts = [s.take(n) for n in (1, 7, 92, 200)]
    np.testing.assert_array_equal(np.concatenate([p.u for p in parts]), whole.u)
    np.testing.assert_array_equal(np.concatenate([p.d for p in parts]), whole.d)
    assert s.position == 300


def test_regressor_covariance(lms_spec):
    u = make_regression_stream(lms_spec, StreamSeed(2)).take(1_000_000).u
    cov = np.einsum("ni,nj->ij", u, u) / len(u)
    np.testing.assert_allclose(np.diag(cov), lms_spec.r_u_diag, rtol=0.02)
    off = cov - np.diag(np.diag(cov))
    assert np.max(np.abs(off)) < 0.01


def test_noise_variance(lms_spec):
    batch = make_regression_stream(lms_spec, StreamSeed(3)).take(200_000)
    v = batch.d - batch.u @ lms_spec.w_star
    assert np.var(v) == pytest.approx(0.01, rel=0.02)


def test_dataset_balanced_and_deterministic(small_logistic_spec):
    a = make_logistic_dataset(small_logistic_spec, StreamSeed(5))
    b = make_logistic_dataset(small_logistic_spec, StreamSeed(5))
    assert np.sum(a.gamma == 1) == np.sum(a.gamma == -1) == 1000
    np.testing.assert_array_equal(a.h, b.h)
    np.testing.assert_array_equal(a.gamma, b.gamma)


def test_class_means():
    spec = logistic_problem(dataset_size=100_000)
    data = make_logistic_dataset(spec, StreamSeed(0))
    for label in (1.0, -1.0):
        mean = data.h[data.gamma == label].mean(axis=0)
        np.testing.assert_allclose(mean, label * 1.5, rtol=0.02)


def test_dataset_is_shuffled(small_logistic_spec):
    data = make_logistic_dataset(small_logistic_spec, StreamSeed(5))
    assert not np.all(data.gamma[:1000] == 1)


def test_logistic_stream_draws_from_dataset(small_logistic_spec):
    data = make_logistic_dataset(small_logistic_spec, StreamSeed(6))
    stream = make_logistic_stream(small_logistic_spec, StreamSeed(6), data)
    batch = stream.take(400)
    rows = {tuple(r) for r in data.h}
    assert all(tuple(r) in rows for r in batch.h)
    # uniform with replacement: over many draws every index shows up
    seen = make_logistic_stream(small_logistic_spec, StreamSeed(6), data).take(40_000)
    assert len({tuple(r) for r in seen.h}) > 0.99 * len(data)


def test_logistic_stream_chunk_invariant(small_logistic_spec):
    whole = make_logistic_stream(small_logistic_spec, StreamSeed(7)).take(100)
    s = make_logistic_stream(small_logistic_spec, StreamSeed(7))
    parts = [s.take(30), s.take(70)]
    np.testing.assert_array_equal(np.concatenate([p.h for p in parts]), whole.h)


def test_negative_take(lms_spec):
    with pytest.raises(ValueError):
        make_regression_stream(lms_spec, StreamSeed(0)).take(-1)


def test_covariance_degenerate_range():
    np.testing.assert_array_equal(random_diagonal_covariance(4, 1.3, 1.3, seed=2), np.full(4, 1.3))


def test_covariance_range_and_reproducible():
    a = random_diagonal_covariance(10, 0.5, 2.0, seed=7)
    b = random_diagonal_covariance(10, 0.5, 2.0, seed=7)
    np.testing.assert_array_equal(a, b)
    assert np.all((a >= 0.5) & (a <= 2.0))


def test_covariance_bad_args():
    with pytest.raises(ValueError):
        random_diagonal_covariance(3, 2.0, 1.0)
    with pytest.raises(ValueError):
        random_diagonal_covariance(0)


def test_reference_problems():
    q = lms_problem()
    assert isinstance(q, QuadraticRiskSpec) and q.dim == 10 and q.noise_std == pytest.approx(0.1)
    np.testing.assert_array_equal(q.r_u_diag, random_diagonal_covariance(10, 0.5, 2.0, 0))
    lg = logistic_problem()
    assert isinstance(lg, LogisticRiskSpec) and lg.rho == 0.1 and lg.mean_scale == 1.5
