import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import EXP, M32
from varbridge.errors import InvalidArgumentError
from varbridge.gp_core import (
    GpPosterior,
    KernelHyperparams,
    KernelKind,
    Observations,
    gp_regress,
    gp_sample,
    gram_matrix,
    kernel_eval,
)

finite_t = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
hyper = st.builds(
    KernelHyperparams,
    st.floats(0.05, 5.0),
    st.floats(0.1, 5.0),
    st.floats(0.0, 2.0),
)
kinds = st.sampled_from([EXP, M32])


class TestKernelEval:
    def test_diagonal_is_variance(self):
        assert kernel_eval(EXP, KernelHyperparams(1, 1), 0, 0) == 1.0
        assert kernel_eval(M32, KernelHyperparams(2, 3), 1.5, 1.5) == 3.0

    def test_half_at_ln2(self):
        assert kernel_eval(EXP, KernelHyperparams(1, 1), 0, math.log(2)) == pytest.approx(0.5, abs=1e-15)

    def test_hand_value(self):
        # 2 * e^{-0.5 * 4}
        assert kernel_eval(EXP, KernelHyperparams(0.5, 2), 1.0, 5.0) == pytest.approx(0.2706705664732254, rel=1e-14)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidArgumentError):
            kernel_eval(EXP, KernelHyperparams(1, 1), float("nan"), 0)
        with pytest.raises(InvalidArgumentError):
            kernel_eval(EXP, KernelHyperparams(1, 1), 0, float("inf"))

    @given(kinds, hyper, finite_t, finite_t)
    def test_symmetric_and_bounded(self, kind, hp, t, tp):
        k = kernel_eval(kind, hp, t, tp)
        assert k == kernel_eval(kind, hp, tp, t)
        assert k <= hp.sigma2_k

    @given(kinds, hyper, finite_t, finite_t, st.floats(-20, 20))
    def test_stationary(self, kind, hp, t, tp, shift):
        a = kernel_eval(kind, hp, t, tp)
        b = kernel_eval(kind, hp, t + shift, tp + shift)
        assert a == pytest.approx(b, rel=1e-9, abs=1e-300)


class TestHyperparams:
    @pytest.mark.parametrize("args", [(0, 1, 0), (-1, 1, 0), (1, 0, 0), (1, 1, -0.1), (math.nan, 1, 0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidArgumentError):
            KernelHyperparams(*args)

    @given(hyper)
    def test_round_trip(self, hp):
        assert KernelHyperparams.parse(hp.serialize()) == hp

    def test_kind_parse(self):
        assert KernelKind.parse("Matern32") is M32
        assert KernelKind.MATERN32.state_dim == 2
        with pytest.raises(InvalidArgumentError):
            KernelKind.parse("rbf")


def _min_eig_power(K, iters=3000):
    """Smallest eigenvalue of a symmetric matrix by power iteration on ``c I - K``."""
    c = np.abs(K).sum(axis=1).max()  # Gershgorin bound on the spectral radius
    B = c * np.eye(K.shape[0]) - K
    v = np.ones(K.shape[0]) / math.sqrt(K.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = B @ v
        lam = float(np.linalg.norm(w))
        v = w / lam
    return c - lam


class TestGram:
    def test_single(self):
        np.testing.assert_array_equal(gram_matrix(EXP, KernelHyperparams(1, 1), [0], [0]), [[1.0]])

    def test_two_points(self):
        K = gram_matrix(EXP, KernelHyperparams(1, 1), [0, math.log(2)], [0, math.log(2)])
        np.testing.assert_allclose(K, [[1, 0.5], [0.5, 1]], atol=1e-15)

    def test_random_5x5_positive_definite(self, rng):
        t = rng.uniform(0, 5, 5)
        K = gram_matrix(EXP, KernelHyperparams(1.3, 0.8), t, t) + 1e-9 * np.eye(5)
        assert _min_eig_power(K) > 0
        L = np.linalg.cholesky(K)
        assert np.all(np.diag(L) > 0)

    @settings(max_examples=50)
    @given(kinds, hyper, st.lists(st.floats(-10, 10), min_size=1, max_size=8, unique=True))
    def test_psd_with_jitter(self, kind, hp, ts):
        K = gram_matrix(kind, hp, ts, ts)
        np.testing.assert_array_equal(K, K.T)
        np.linalg.cholesky(K + 1e-9 * hp.sigma2_k * np.eye(len(ts)) + 1e-12 * np.eye(len(ts)))


def _dense_inverse_regress(kind, hp, obs, grid):
    K = gram_matrix(kind, hp, obs.times, obs.times) + hp.sigma2_y * np.eye(len(obs))
    Ks = gram_matrix(kind, hp, obs.times, grid)
    Kss = gram_matrix(kind, hp, grid, grid)
    Kinv = np.linalg.inv(K)
    return Ks.T @ Kinv @ obs.values, Kss - Ks.T @ Kinv @ Ks


class TestGpRegress:
    def test_no_observations_prior(self):
        hp = KernelHyperparams(1.0, 2.0, 0.1)
        grid = np.linspace(0, 3, 7)
        post = gp_regress(EXP, hp, Observations.empty(), grid)
        np.testing.assert_array_equal(post.mean, np.zeros(7))
        np.testing.assert_array_equal(post.cov, gram_matrix(EXP, hp, grid, grid))

    def test_noise_free_interpolation(self):
        post = gp_regress(EXP, KernelHyperparams(1, 1, 0.0), Observations([0.0], [1.0]), [0.0])
        assert abs(post.mean[0] - 1.0) <= 1e-10
        assert abs(post.cov[0, 0]) <= 1e-10

    @pytest.mark.parametrize("kind", [EXP, M32])
    def test_matches_dense_inverse(self, kind):
        hp = KernelHyperparams(0.8, 1.5, 0.2)
        obs = Observations([0.3, 1.1, 2.6], [0.5, -0.2, 1.0])
        grid = np.linspace(0, 3, 10)
        post = gp_regress(kind, hp, obs, grid)
        mean, cov = _dense_inverse_regress(kind, hp, obs, grid)
        np.testing.assert_allclose(post.mean, mean, atol=1e-8)
        np.testing.assert_allclose(post.cov, cov, atol=1e-8)

    @settings(max_examples=40)
    @given(hyper, st.integers(0, 20), st.floats(-3, 3))
    def test_exact_observation_contracts(self, hp, g_idx, y):
        hp = KernelHyperparams(hp.lam, hp.sigma2_k, 0.0)
        grid = np.linspace(0, 5, 21)
        post = gp_regress(EXP, hp, Observations([grid[g_idx]], [y]), grid)
        assert post.cov[g_idx, g_idx] <= 1e-10

    def test_posterior_symmetric(self):
        post = gp_regress(M32, KernelHyperparams(2, 1, 0.05), Observations([0, 1, 2], [1, 0, 1]), np.linspace(0, 2, 30))
        np.testing.assert_allclose(post.cov, post.cov.T, atol=1e-12)
        assert np.all(np.diag(post.cov) >= -1e-12)

    def test_observations_validation(self):
        with pytest.raises(InvalidArgumentError):
            Observations([1.0, 0.5], [0, 0])
        with pytest.raises(InvalidArgumentError):
            Observations([0.0, 1.0], [0.0])


class TestGpSample:
    def test_zero_cov_returns_mean(self):
        post = GpPosterior([0, 1, 2], [1.0, -2.0, 0.5], np.zeros((3, 3)))
        b = gp_sample(post, 4, 0)
        for row in b.projected():
            np.testing.assert_array_equal(row, post.mean)

    def test_deterministic(self):
        post = gp_regress(EXP, KernelHyperparams(1, 1, 0.1), Observations([0.5], [1.0]), np.linspace(0, 2, 9))
        a, b = gp_sample(post, 5, 42), gp_sample(post, 5, 42)
        np.testing.assert_array_equal(a.states, b.states)

    def test_sample_mean_converges(self):
        hp = KernelHyperparams(1, 1, 0.1)
        post = gp_regress(EXP, hp, Observations([0.0, 1.0], [1.0, -1.0]), [0.0, 0.5, 1.0])
        n = 5000
        b = gp_sample(post, n, 7).projected()
        sd = np.sqrt(post.var)
        assert np.all(np.abs(b.mean(axis=0) - post.mean) <= 4 * sd / math.sqrt(n))

    def test_rejects_zero_draws(self):
        post = GpPosterior([0.0], [0.0], [[1.0]])
        with pytest.raises(InvalidArgumentError):
            gp_sample(post, 0, 0)
