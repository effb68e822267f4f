import numpy as np
import pytest

from momentum_equiv.data_stream import StreamSeed, make_logistic_dataset, make_regression_stream
from momentum_equiv.risk_models import (
    ConvergenceError,
    LabeledFeature,
    LogisticRiskSpec,
    QuadraticRiskSpec,
    Regression,
    TheoryConstants,
    compute_minimizer,
    estimate_xi1,
    gradient_noise,
    hessian_bounds,
    loss_gradient,
    pointwise_loss,
    true_gradient,
)


def quad(r, w_star, noise_std=0.0):
    return QuadraticRiskSpec(np.array(r, dtype=float), np.array(w_star, dtype=float), noise_std)


class TestSpecs:
    def test_quadratic_rejects_nonpositive_covariance(self):
        with pytest.raises(ValueError):
            quad([1.0, 0.0], [0.0, 0.0])

    def test_quadratic_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            quad([1.0, 2.0], [0.0])

    def test_logistic_rejects_zero_rho(self):
        with pytest.raises(ValueError, match="rho"):
            LogisticRiskSpec(np.ones(3), rho=0.0)

    def test_logistic_rejects_odd_dataset(self):
        with pytest.raises(ValueError):
            LogisticRiskSpec(np.ones(3), dataset_size=11)

    def test_r_du(self):
        spec = quad([1.0, 2.0], [3.0, -1.0])
        np.testing.assert_array_equal(spec.r_du, [3.0, -2.0])

    def test_theory_constants_order(self):
        with pytest.raises(ValueError):
            TheoryConstants(nu=2.0, delta=1.0)


class TestTrueGradient:
    def test_zero_at_minimizer(self, lms_spec):
        np.testing.assert_array_equal(true_gradient(lms_spec, lms_spec.w_star), np.zeros(lms_spec.dim))

    def test_hand_value(self):
        spec = quad([1.0, 2.0], [0.0, 0.0])
        np.testing.assert_array_equal(true_gradient(spec, np.array([1.0, 1.0])), [1.0, 2.0])

    def test_logistic_at_origin_is_half_mean(self):
        spec = LogisticRiskSpec(np.ones(2), rho=0.3, dataset_size=4)
        h = np.array([[1.0, 2.0], [0.5, -1.0], [3.0, 0.0], [-2.0, 1.0]])
        gamma = np.array([1.0, -1.0, 1.0, -1.0])
        expected = -np.mean(0.5 * gamma[:, None] * h, axis=0)
        np.testing.assert_allclose(true_gradient(spec, np.zeros(2), LabeledFeature(h, gamma)), expected, rtol=1e-15)

    def test_logistic_accepts_sample_list(self):
        spec = LogisticRiskSpec(np.ones(2), dataset_size=2)
        data = LabeledFeature(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, -1.0]))
        w = np.array([0.2, -0.4])
        np.testing.assert_allclose(true_gradient(spec, w, list(data)), true_gradient(spec, w, data))

    def test_logistic_needs_reference(self):
        with pytest.raises(ValueError):
            true_gradient(LogisticRiskSpec(np.ones(2)), np.zeros(2))

    def test_empty_reference(self):
        with pytest.raises(ValueError):
            true_gradient(LogisticRiskSpec(np.ones(2)), np.zeros(2), [])

    def test_dimension_mismatch(self, lms_spec):
        with pytest.raises(ValueError, match="dimension"):
            true_gradient(lms_spec, np.zeros(3))


class TestLossGradient:
    def test_hand_lms(self):
        spec = quad([1.0, 1.0], [0.0, 0.0])
        g = loss_gradient(spec, np.zeros(2), Regression(np.array([1.0, 0.0]), np.array(1.0)))
        np.testing.assert_array_equal(g, [-1.0, 0.0])

    def test_zero_prediction_error(self):
        spec = quad([1.0, 1.0], [0.0, 0.0])
        u = np.array([0.3, -2.0])
        w = np.array([1.5, 0.25])
        g = loss_gradient(spec, w, Regression(u, np.array(u @ w)))
        np.testing.assert_array_equal(g, np.zeros(2))

    def test_logistic_at_origin(self):
        spec = LogisticRiskSpec(np.ones(3), rho=0.7)
        h = np.array([1.0, -2.0, 0.5])
        for gamma in (1.0, -1.0):
            g = loss_gradient(spec, np.zeros(3), LabeledFeature(h, np.array(gamma)))
            np.testing.assert_allclose(g, -gamma * h / 2, rtol=1e-15)

    def test_logistic_large_margin_is_finite(self):
        spec = LogisticRiskSpec(np.ones(1), rho=0.1)
        for w in (1e4, -1e4):
            g = loss_gradient(spec, np.array([w]), LabeledFeature(np.array([1.0]), np.array(1.0)))
            assert np.all(np.isfinite(g))

    def test_wrong_sample_type(self, lms_spec, logistic_spec):
        with pytest.raises(TypeError):
            loss_gradient(lms_spec, np.zeros(10), LabeledFeature(np.zeros(10), np.array(1.0)))
        with pytest.raises(TypeError):
            loss_gradient(logistic_spec, np.zeros(10), Regression(np.zeros(10), np.array(0.0)))

    def test_batched_matches_loop(self, small_logistic_spec):
        data = make_logistic_dataset(small_logistic_spec, StreamSeed(1)).select(np.arange(7))
        w = np.random.default_rng(2).standard_normal((7, 10))
        batched = loss_gradient(small_logistic_spec, w, data)
        looped = np.stack([loss_gradient(small_logistic_spec, w[k], s) for k, s in enumerate(data)])
        np.testing.assert_allclose(batched, looped, rtol=1e-15, atol=1e-16)

    def test_logistic_matches_finite_difference(self, small_logistic_spec):
        spec = small_logistic_spec
        rng = np.random.default_rng(5)
        data = make_logistic_dataset(spec, StreamSeed(5))
        for k in range(20):
            w = rng.standard_normal(spec.dim)
            s = data.select(k)
            step = 1e-6
            fd = np.array(
                [
                    (pointwise_loss(spec, w + step * e, s) - pointwise_loss(spec, w - step * e, s)) / (2 * step)
                    for e in np.eye(spec.dim)
                ]
            )
            g = loss_gradient(spec, w, s)
            assert np.linalg.norm(g - fd) / np.linalg.norm(g) < 1e-6


class TestGradientNoise:
    def test_vanishes_at_minimizer_without_noise(self, lms_spec):
        u = np.random.default_rng(0).standard_normal(10)
        sample = Regression(u, np.array(u @ lms_spec.w_star))
        np.testing.assert_allclose(gradient_noise(lms_spec, lms_spec.w_star, sample), 0.0, atol=1e-14)

    def test_hand_value(self):
        spec = quad([1.0], [0.0])
        s = gradient_noise(spec, np.array([1.0]), Regression(np.array([1.0]), np.array(0.0)))
        np.testing.assert_array_equal(s, [0.0])

    def test_identity_with_true_gradient(self, lms_spec):
        stream = make_regression_stream(lms_spec, StreamSeed(3))
        batch = stream.take(200)
        w = np.random.default_rng(4).standard_normal((200, 10))
        lhs = loss_gradient(lms_spec, w, batch)
        rhs = true_gradient(lms_spec, w) + gradient_noise(lms_spec, w, batch)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_zero_mean(self, lms_spec):
        n = 100_000
        stream = make_regression_stream(lms_spec, StreamSeed(11))
        w = np.full(10, 0.5)
        s = gradient_noise(lms_spec, w, stream.take(n))
        mean = s.mean(axis=0)
        sem = s.std(axis=0) / np.sqrt(n)
        assert np.all(np.abs(mean) < 4 * sem)

    def test_logistic_unsupported(self, logistic_spec):
        with pytest.raises(TypeError):
            gradient_noise(logistic_spec, np.zeros(10), LabeledFeature(np.zeros(10), np.array(1.0)))


class TestHessianBounds:
    def test_diagonal(self):
        assert hessian_bounds(quad([1.0, 2.0], [0.0, 0.0])) == (1.0, 2.0)

    def test_scaled_identity(self):
        assert hessian_bounds(quad([0.7] * 4, [0.0] * 4)) == (0.7, 0.7)

    def test_logistic_centered_features(self):
        nu, delta = hessian_bounds(LogisticRiskSpec(np.array([1.0]), rho=0.1, mean_scale=0.0))
        assert nu == 0.1
        assert delta == pytest.approx(1.1, rel=1e-14)

    def test_logistic_bound_holds_empirically(self, small_logistic_spec):
        # the Hessian rho I + E[sigma' h h^T] is bracketed by (nu, delta) since sigma' <= 1/4 <= 1
        spec = small_logistic_spec
        nu, delta = hessian_bounds(spec)
        h = make_logistic_dataset(spec, StreamSeed(0)).h
        sig = 0.25
        top = spec.rho + np.linalg.eigvalsh(sig * h.T @ h / len(h))[-1]
        assert nu <= top <= delta


class TestMinimizer:
    def test_quadratic_returns_truth(self, lms_spec):
        w = compute_minimizer(lms_spec)
        np.testing.assert_array_equal(w, lms_spec.w_star)
        assert w is not lms_spec.w_star

    def test_logistic_gradient_below_tol(self, small_logistic_spec):
        data = make_logistic_dataset(small_logistic_spec, StreamSeed(2))
        w = compute_minimizer(small_logistic_spec, data, tol=1e-10)
        assert np.linalg.norm(true_gradient(small_logistic_spec, w, data)) < 1e-10

    def test_mirrored_dataset(self):
        # each (h, +1) paired with (-h, -1): the optimality condition is unaffected by the mirror
        rng = np.random.default_rng(3)
        h = rng.standard_normal((50, 3)) + 1.0
        data = LabeledFeature(np.vstack([h, -h]), np.concatenate([np.ones(50), -np.ones(50)]))
        spec = LogisticRiskSpec(np.ones(3), rho=0.2, dataset_size=100)
        w = compute_minimizer(spec, data, tol=1e-11)
        assert np.linalg.norm(true_gradient(spec, w, data)) < 1e-11
        half = LabeledFeature(h, np.ones(50))
        np.testing.assert_allclose(w, compute_minimizer(spec, half, tol=1e-11), atol=1e-9)

    def test_iteration_cap(self, small_logistic_spec):
        data = make_logistic_dataset(small_logistic_spec, StreamSeed(2))
        with pytest.raises(ConvergenceError):
            compute_minimizer(small_logistic_spec, data, tol=1e-12, max_iter=3)

    def test_needs_dataset(self, small_logistic_spec):
        with pytest.raises(ValueError):
            compute_minimizer(small_logistic_spec)


class TestXi1:
    def test_perfect_cancellation(self):
        spec = quad([2.0], [0.0])
        u = np.sqrt(2.0) * np.array([[1.0], [-1.0], [1.0]] * 400)
        assert estimate_xi1(spec, regressors=u) == pytest.approx(0.0, abs=1e-24)

    def test_scalar_gaussian(self):
        # E (1 - u^2)^2 = 1 - 2 + 3 = 2 for u ~ N(0, 1)
        spec = quad([1.0], [0.0])
        assert estimate_xi1(spec, n_samples=1_000_000, seed=1) == pytest.approx(2.0, rel=0.05)

    def test_scalar_matches_brute_force(self):
        spec = quad([1.0], [0.0])
        u = np.random.default_rng(9).standard_normal((20_000, 1))
        brute = np.mean((1.0 - u[:, 0] ** 2) ** 2)
        assert estimate_xi1(spec, regressors=u) == pytest.approx(brute, rel=1e-10)

    def test_matrix_norm_matches_numpy(self):
        spec = quad([0.5, 1.0, 2.0], [0.0] * 3)
        u = np.random.default_rng(4).standard_normal((200, 3)) * np.sqrt(spec.r_u_diag)
        ref = np.mean([np.linalg.norm(np.diag(spec.r_u_diag) - np.outer(x, x), 2) ** 2 for x in u])
        assert estimate_xi1(spec, regressors=u) == pytest.approx(ref, rel=1e-8)

    def test_seed_invariance(self):
        spec = quad([0.5, 2.0], [0.0, 0.0])
        a = estimate_xi1(spec, 200_000, seed=0)
        b = estimate_xi1(spec, 200_000, seed=1)
        assert a == pytest.approx(b, rel=0.03)

    def test_small_sample_rejected(self):
        with pytest.raises(ValueError):
            estimate_xi1(quad([1.0], [0.0]), n_samples=10)
