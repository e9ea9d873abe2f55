import numpy as np
import pytest
from scipy.stats import norm

from tski.diagnostics import (
    KlSamples,
    MixingBoundParams,
    fdr_bound,
    fdr_bound_report,
    gaussian_kl_stats,
    kl_draws_from_simulation,
    mixing_bound,
)
from tski.errors import EmptyGrid
from tski.knockoffs import exact_model_from_truth, fit_knockoff_model, sample_knockoffs
from tski.numerics import RngStream


def density_ratio_oracle(x, xt, sigma_true, sigma_model):
    """Univariate case: both conditionals are unconditional normals."""
    st = np.sqrt(sigma_true)
    sm = np.sqrt(sigma_model)
    return float(
        np.sum(
            norm.logpdf(x, scale=st) + norm.logpdf(xt, scale=sm)
            - norm.logpdf(xt, scale=st) - norm.logpdf(x, scale=sm)
        )
    )


def spd(gen, p):
    m = gen.standard_normal((p, p))
    return m.T @ m + 0.3 * np.eye(p)


class TestGaussianKlStats:
    def test_exact_model_gives_zero(self):
        gen = np.random.default_rng(0)
        sigma = spd(gen, 5)
        model = exact_model_from_truth(sigma)
        x = gen.standard_normal((40, 5)) @ np.linalg.cholesky(sigma).T
        xt = sample_knockoffs(model, x, RngStream(1))
        kl = gaussian_kl_stats(sigma, model, x, xt)
        assert np.array_equal(kl, np.zeros(5))

    def test_univariate_against_density_oracle(self):
        gen = np.random.default_rng(2)
        sigma_true = 1.3
        sigma_model = 0.8
        model = exact_model_from_truth(np.array([[sigma_model]]))
        x = gen.standard_normal((200, 1)) * np.sqrt(sigma_true)
        xt = sample_knockoffs(model, x, RngStream(3))
        kl = gaussian_kl_stats(np.array([[sigma_true]]), model, x, xt)
        oracle = density_ratio_oracle(x[:, 0], xt[:, 0], sigma_true, sigma_model)
        assert kl[0] == pytest.approx(oracle, rel=1e-10)

    def test_univariate_closed_form(self):
        # summand = (x^2 - xt^2) * (1/(2 s_model) - 1/(2 s_true))
        gen = np.random.default_rng(3)
        s_true, s_model = 2.0, 0.5
        model = exact_model_from_truth(np.array([[s_model]]))
        x = gen.standard_normal((50, 1)) * np.sqrt(s_true)
        xt = sample_knockoffs(model, x, RngStream(4))
        kl = gaussian_kl_stats(np.array([[s_true]]), model, x, xt)
        expected = np.sum((x[:, 0] ** 2 - xt[:, 0] ** 2) * (0.5 / s_model - 0.5 / s_true))
        assert kl[0] == pytest.approx(expected, rel=1e-10)

    def test_antisymmetric_in_coordinate_swap(self):
        # Exchanging (x_ij, xt_ij) for a single coordinate j negates that
        # coordinate's statistic: the conditioning x_{-j} is untouched.
        gen = np.random.default_rng(4)
        sigma = spd(gen, 4)
        sigma_model = sigma + 0.2 * np.eye(4)
        model = exact_model_from_truth(sigma_model)
        x = gen.standard_normal((30, 4))
        xt = sample_knockoffs(model, x, RngStream(5))
        kl = gaussian_kl_stats(sigma, model, x, xt)
        for j in range(4):
            x2 = x.copy()
            xt2 = xt.copy()
            x2[:, j], xt2[:, j] = xt[:, j], x[:, j]
            kl_swapped = gaussian_kl_stats(sigma, model, x2, xt2)
            assert kl_swapped[j] == pytest.approx(-kl[j], rel=1e-9, abs=1e-9)

    def test_miscalibration_increases_kl(self):
        gen = np.random.default_rng(6)
        sigma = np.eye(3)
        good = exact_model_from_truth(sigma)
        bumped = sigma.copy()
        bumped[0, 0] *= 1.1
        bad = exact_model_from_truth(bumped)
        means_good, means_bad = [], []
        for r in range(100):
            x = RngStream(7, r).generator().standard_normal((50, 3))
            xt_g = sample_knockoffs(good, x, RngStream(8, r))
            xt_b = sample_knockoffs(bad, x, RngStream(8, r))
            means_good.append(np.max(gaussian_kl_stats(sigma, good, x, xt_g)))
            means_bad.append(np.max(gaussian_kl_stats(sigma, bad, x, xt_b)))
        assert np.mean(means_bad) > np.mean(means_good)


class TestFdrBound:
    def test_zero_kl_collapses_to_tau(self):
        draws = (tuple([np.zeros(4)]),)
        kl = KlSamples(draws=draws, epsilon_grid=np.array([1e-6, 1e-3, 1.0]))
        assert fdr_bound(kl, 0.2, 0.0) == pytest.approx(0.2, abs=1e-4)

    def test_mixing_is_additive(self):
        draws = (tuple([np.zeros(3)]),)
        kl = KlSamples(draws=draws, epsilon_grid=np.array([1e-6]))
        base = fdr_bound(kl, 0.2, 0.0)
        assert fdr_bound(kl, 0.2, 0.05) == pytest.approx(base + 0.05)

    def test_saturated_kl(self):
        grid = np.geomspace(1e-4, 5.0, 10)
        q_plus_1 = 3
        draws = tuple(tuple(np.full(4, 100.0) for _ in range(q_plus_1)) for _ in range(7))
        kl = KlSamples(draws=draws, epsilon_grid=grid)
        expected = 0.3 * np.exp(grid[0]) + q_plus_1 + 0.01
        assert fdr_bound(kl, 0.3, 0.01) == pytest.approx(expected)

    def test_floor_at_tau_exp_eps_min(self):
        gen = np.random.default_rng(9)
        grid = np.geomspace(1e-4, 5.0, 30)
        for _ in range(20):
            draws = tuple(
                tuple(gen.exponential(1.0, 5) for _ in range(2)) for _ in range(4)
            )
            kl = KlSamples(draws=draws, epsilon_grid=grid)
            assert fdr_bound(kl, 0.2, 0.0) >= 0.2 * np.exp(grid[0]) - 1e-12

    def test_dominated_samples_lower_bound(self):
        gen = np.random.default_rng(10)
        grid = np.geomspace(1e-4, 5.0, 30)
        big = tuple(tuple(gen.exponential(1.0, 5) for _ in range(2)) for _ in range(6))
        small = tuple(tuple(0.5 * v for v in draw) for draw in big)
        kl_big = KlSamples(draws=big, epsilon_grid=grid)
        kl_small = KlSamples(draws=small, epsilon_grid=grid)
        assert fdr_bound(kl_small, 0.2, 0.0) <= fdr_bound(kl_big, 0.2, 0.0) + 1e-12

    def test_empty_grid(self):
        with pytest.raises(EmptyGrid):
            KlSamples(draws=(tuple([np.zeros(2)]),), epsilon_grid=np.array([]))

    def test_report_decomposition(self):
        draws = (tuple([np.zeros(2)]),)
        kl = KlSamples(draws=draws, epsilon_grid=np.array([1e-5]))
        rep = fdr_bound_report(kl, 0.25, 0.03)
        assert set(rep) >= {"epsilon", "base_term", "kl_term", "mixing_term", "bound"}
        assert rep["bound"] == pytest.approx(rep["base_term"] + rep["kl_term"] + rep["mixing_term"])


class TestMixingBound:
    def test_iid_case_zero(self):
        assert mixing_bound(MixingBoundParams(c0=1.0, rho=0.0, q=1, n=100)) == 0.0
        assert mixing_bound(MixingBoundParams(c0=1.0, rho=0.0, q=0, n=100)) == 0.0

    def test_numeric(self):
        assert mixing_bound(MixingBoundParams(c0=2.0, rho=0.5, q=3, n=100)) == pytest.approx(25.0)

    def test_geometric_decay(self):
        a = mixing_bound(MixingBoundParams(c0=1.5, rho=0.3, q=2, n=50))
        b = mixing_bound(MixingBoundParams(c0=1.5, rho=0.3, q=3, n=50))
        assert b == pytest.approx(0.3 * a)

    def test_validation(self):
        with pytest.raises(ValueError):
            MixingBoundParams(c0=0.0, rho=0.5, q=1, n=10)
        with pytest.raises(ValueError):
            MixingBoundParams(c0=1.0, rho=1.0, q=1, n=10)


class TestSimulationDraws:
    def test_exact_model_bound_near_tau(self):
        gen = np.random.default_rng(11)
        sigma = spd(gen, 4)
        model = exact_model_from_truth(sigma)
        kl = kl_draws_from_simulation(sigma, model, n=60, q=1, reps=20, rng=RngStream(12))
        assert fdr_bound(kl, 0.2, 0.0) == pytest.approx(0.2, abs=1e-3)

    def test_fitted_model_bound_exceeds_tau(self):
        gen = np.random.default_rng(13)
        sigma = spd(gen, 4)
        x = gen.standard_normal((30, 4)) @ np.linalg.cholesky(sigma).T
        model = fit_knockoff_model(x)
        kl = kl_draws_from_simulation(sigma, model, n=60, q=0, reps=20, rng=RngStream(14))
        assert fdr_bound(kl, 0.2, 0.0) >= 0.2
