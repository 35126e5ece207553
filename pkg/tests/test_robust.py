import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specter.errors import DegenerateInputError, DomainError
from specter.robust import (
    HuberConfig,
    huber_cov,
    huber_entry,
    huber_loss,
    kendall_correlation,
    kendall_marginal_cov,
    kendall_spatial,
    kendall_tau_matrix,
    plugin_v,
    sample_cov,
)
from specter.simharness import make_rng
from specter.spectra import eig_top, subspace_distance

from oracles import huber_grid, huber_objective, loop_kendall, loop_sample_cov, loop_spatial_kendall

seeds = st.integers(0, 2**32 - 1)


class TestSampleCov:
    def test_two_rows(self):
        S = sample_cov([[1.0, 0.0], [-1.0, 0.0]]).sigma_hat
        assert np.array_equal(S, [[1, 0], [0, 0]])

    def test_zero(self):
        assert np.array_equal(sample_cov(np.zeros((4, 3))).sigma_hat, np.zeros((3, 3)))

    def test_loop_oracle(self, rng):
        X = rng.standard_normal((5, 3))
        assert np.allclose(sample_cov(X).sigma_hat, loop_sample_cov(X), atol=1e-12)

    def test_center(self, rng):
        X = rng.standard_normal((6, 2)) + 10
        S = sample_cov(X, center=True).sigma_hat
        Xc = X - X.mean(axis=0)
        assert np.allclose(S, loop_sample_cov(Xc))


class TestHuberEntry:
    def test_constant(self):
        assert huber_entry([2.5] * 7, 0.1) == 2.5

    def test_quadratic_regime(self, rng):
        z = rng.standard_normal(30)
        assert huber_entry(z, 1e6) == pytest.approx(z.mean(), abs=1e-14)

    def test_grid_example(self):
        z = [0.0, 0.0, 0.0, 100.0]
        got = huber_entry(z, 1.0)
        assert got == pytest.approx(huber_grid(z, 1.0), abs=1e-4)
        # stationarity: three residuals -m inside, one clipped at +1 -> m = 1/3
        assert got == pytest.approx(1 / 3, abs=1e-10)

    @pytest.mark.parametrize("seed", range(10))
    def test_grid_oracle(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.standard_t(2.5, size=int(rng.integers(2, 40)))
        alpha = float(rng.uniform(0.1, 3.0))
        got = huber_entry(z, alpha)
        ref = huber_grid(z, alpha)
        assert abs(got - ref) <= 1e-4
        assert huber_objective(z, got, alpha)[0] <= huber_objective(z, ref, alpha)[0] + 1e-9

    def test_flat_segment_midpoint(self):
        # two points far apart with small alpha: every m in [1, 9] is a minimiser
        assert huber_entry([0.0, 10.0], 1.0) == pytest.approx(5.0, abs=1e-9)

    def test_bad_alpha(self):
        with pytest.raises(DomainError):
            huber_entry([1.0], 0.0)

    @given(seeds, st.floats(-50, 50))
    def test_translation_equivariant(self, seed, c):
        rng = np.random.default_rng(seed)
        z = rng.standard_t(3, size=15)
        a = huber_entry(z + c, 0.7)
        b = huber_entry(z, 0.7) + c
        assert a == pytest.approx(b, abs=1e-9 * (1 + abs(c)))

    @given(seeds, st.integers(0, 14), st.floats(0.0, 5.0))
    def test_monotone(self, seed, k, bump):
        rng = np.random.default_rng(seed)
        z = rng.standard_t(3, size=15)
        z2 = z.copy()
        z2[k] += bump
        assert huber_entry(z2, 0.7) >= huber_entry(z, 0.7) - 1e-10

    def test_loss(self):
        assert np.allclose(huber_loss(np.array([0.5, -2.0]), 1.0), [0.25, 3.0])


class TestHuberConfig:
    def test_default_rule(self):
        cfg = HuberConfig.default(200, 50, 2.0)
        assert cfg.epsilon_conf == pytest.approx(50.0**-3)
        assert cfg.alpha == pytest.approx(math.sqrt(200 * 4.0 / (3 * math.log(50))))
        assert cfg.valid

    def test_product_rule(self):
        cfg = HuberConfig.default(200, 50, 2.0, rule="product")
        assert cfg.alpha == pytest.approx(math.sqrt(3 * 200 * 4.0 * math.log(50)))

    def test_invalid_warns(self):
        with pytest.warns(RuntimeWarning):
            cfg = HuberConfig.default(10, 50, 1.0)
        assert not cfg.valid

    def test_bad_v(self):
        with pytest.raises(DomainError):
            HuberConfig.default(10, 5, 0.0)
        with pytest.raises(DomainError):
            HuberConfig.default(10, 5, 1.0, rule="x")


class TestHuberCov:
    def test_quadratic_regime_equals_sample(self, rng):
        X = rng.standard_normal((40, 4))
        cfg = HuberConfig(v=1.0, alpha=1e9, epsilon_conf=0.1)
        assert np.allclose(huber_cov(X, cfg).sigma_hat, sample_cov(X).sigma_hat, atol=1e-8)

    def test_single_observation(self, rng):
        x = rng.standard_normal((1, 3))
        cfg = HuberConfig(v=1.0, alpha=0.01, epsilon_conf=0.1)
        assert np.allclose(huber_cov(x, cfg).sigma_hat, np.outer(x, x), atol=1e-14)

    def test_entrywise_matches_huber_entry(self, rng):
        X = rng.standard_t(3, size=(30, 3))
        cfg = HuberConfig(v=1.0, alpha=0.8, epsilon_conf=0.1)
        S = huber_cov(X, cfg, block=2).sigma_hat
        for i in range(3):
            for j in range(3):
                assert S[i, j] == pytest.approx(huber_entry(X[:, i] * X[:, j], 0.8), abs=1e-10)
        assert np.array_equal(S, S.T)

    def test_gaussian_close_to_sample(self):
        d, n = 10, 2000
        X = make_rng(3).standard_normal((n, d))
        # Var(x_i x_j) is 1 off the diagonal and 2 on it
        v = math.sqrt(2.0)
        cfg = HuberConfig.default(n, d, v)
        diff = np.abs(huber_cov(X, cfg).sigma_hat - sample_cov(X).sigma_hat).max()
        assert diff <= 4 * v * math.sqrt(3 * math.log(d) / n)

    def test_plugin_v(self, rng):
        X = rng.standard_normal((4000, 3))
        assert plugin_v(X) == pytest.approx(math.sqrt(2), rel=0.15)
        with pytest.raises(DegenerateInputError):
            plugin_v(np.zeros((5, 2)))


class TestKendall:
    def test_concordant(self, rng):
        x = rng.standard_normal(20)
        T = kendall_tau_matrix(np.column_stack([x, np.exp(x)]))
        assert T[0, 1] == 1.0

    def test_discordant_pair(self):
        T = kendall_tau_matrix([[0.0, 1.0], [1.0, 0.0]])
        assert T[0, 1] == -1.0

    def test_loop_oracle(self, rng):
        X = rng.standard_normal((12, 4))
        X[3, 1] = X[5, 1]  # a tie
        assert np.allclose(kendall_tau_matrix(X), loop_kendall(X), atol=1e-14)

    @given(seeds)
    def test_range_and_monotone_invariance(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((15, 3))
        T = kendall_tau_matrix(X)
        assert np.all(np.abs(T) <= 1)
        Y = np.column_stack([np.exp(X[:, 0]), X[:, 1] ** 3, 2 * X[:, 2] + 7])
        assert np.array_equal(kendall_tau_matrix(Y), T)

    def test_sine_transform(self):
        rng = make_rng(5)
        C = np.array([[1.0, 0.5], [0.5, 1.0]])
        X = rng.multivariate_normal(np.zeros(2), C, size=2000)
        assert abs(kendall_correlation(X)[0, 1] - 0.5) <= 0.05

    def test_marginal(self, rng):
        X = rng.standard_normal((10, 3))
        R = kendall_correlation(X)
        assert np.allclose(kendall_marginal_cov(X, np.ones(3)).sigma_hat, R)
        s = np.array([1.0, 2.0, 3.0])
        assert np.allclose(kendall_marginal_cov(X, s).sigma_hat, np.outer(s, s) * R)
        one = kendall_marginal_cov(X[:, :1], [2.0]).sigma_hat
        assert np.array_equal(one, [[4.0]])
        with pytest.raises(DomainError):
            kendall_marginal_cov(X, [1.0, 0.0, 1.0])

    def test_marginal_independent_columns(self):
        X = make_rng(8).standard_normal((600, 3))
        s = np.array([1.0, 2.0, 0.5])
        S = kendall_marginal_cov(X, s).sigma_hat
        assert np.abs(S - np.diag(s**2)).max() <= 0.15


class TestSpatial:
    def test_two_rows(self):
        S = kendall_spatial([[0.0, 0.0], [3.0, 4.0]])
        assert np.allclose(S, np.outer([0.6, 0.8], [0.6, 0.8]))
        assert np.trace(S) == pytest.approx(1.0)

    def test_axis_data(self, rng):
        X = np.zeros((6, 3))
        X[:, 1] = rng.standard_normal(6)
        assert np.allclose(kendall_spatial(X), np.diag([0, 1.0, 0]))

    def test_loop_oracle_and_duplicates(self, rng):
        X = rng.standard_normal((8, 3))
        X[4] = X[2]
        assert np.allclose(kendall_spatial(X), loop_spatial_kendall(X), atol=1e-14)

    def test_all_duplicates(self):
        with pytest.raises(DegenerateInputError):
            kendall_spatial(np.ones((4, 2)))

    def test_shift_and_scale_invariance(self):
        # integer data with power-of-two scaling keeps every operation exact
        X = np.random.default_rng(1).integers(-5, 6, size=(10, 3)).astype(float)
        S = kendall_spatial(X)
        assert np.array_equal(kendall_spatial(X + np.array([3.0, -7.0, 11.0])), S)
        assert np.array_equal(kendall_spatial(4.0 * X), S)

    def test_spiked_t3_eigenvectors(self):
        d, n, r = 30, 100, 2
        wins = []
        for rep in range(15):
            rng = make_rng(21, rep)
            V, _ = np.linalg.qr(rng.standard_normal((d, r)))
            L = np.linalg.cholesky(V @ np.diag([20.0, 10.0]) @ V.T + np.eye(d))
            w = rng.chisquare(3, size=n)
            X = (rng.standard_normal((n, d)) @ L.T) * np.sqrt(1.0 / w)[:, None]
            _, Vk = eig_top(kendall_spatial(X), r)
            _, Vs = eig_top(sample_cov(X).sigma_hat, r)
            wins.append(subspace_distance(Vk, V) - subspace_distance(Vs, V))
        assert np.median(wins) < 0
