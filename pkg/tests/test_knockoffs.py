import numpy as np
import pytest

from tski.errors import ConstantColumn, DimensionMismatch, NotPositiveDefinite
from tski.knockoffs import (
    ShrinkageConfig,
    exact_model_from_truth,
    fit_knockoff_model,
    sample_knockoffs,
)
from tski.numerics import RngStream, cholesky


def toeplitz_corr(p, rho):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


class TestFitKnockoffModel:
    def test_iid_standard_normal_limit(self):
        gen = np.random.default_rng(0)
        x = gen.standard_normal((100_000, 4))
        model = fit_knockoff_model(x)
        assert np.max(np.abs(model.sigma_hat - np.eye(4))) < 0.05
        assert model.s == pytest.approx(1.0, abs=0.05)
        assert np.max(np.abs(model.d - 1.0)) < 0.05
        assert np.max(np.abs(model.cond_mean_mat)) < 0.05
        cond_cov = model.cond_cov_chol @ model.cond_cov_chol.T
        assert np.max(np.abs(cond_cov - np.eye(4))) < 0.05

    def test_univariate_unit_variance(self):
        # variance exactly 1 by construction
        x = np.array([[1.0], [-1.0], [1.0], [-1.0]])
        model = fit_knockoff_model(x)
        assert model.d[0] == pytest.approx(1.0, abs=1e-5)
        assert model.cond_mean_mat[0, 0] == pytest.approx(0.0, abs=1e-5)
        cond_var = model.cond_cov_chol[0, 0] ** 2
        assert cond_var == pytest.approx(1.0, abs=1e-5)

    def test_full_shrinkage_diagonal(self):
        gen = np.random.default_rng(1)
        x = gen.standard_normal((200, 5)) @ np.linalg.cholesky(toeplitz_corr(5, 0.6)).T
        model = fit_knockoff_model(x, ShrinkageConfig(gamma=1.0))
        off = model.sigma_hat - np.diag(np.diag(model.sigma_hat))
        assert np.max(np.abs(off)) == 0.0
        off_omega = model.omega_hat - np.diag(np.diag(model.omega_hat))
        assert np.max(np.abs(off_omega)) < 1e-10

    def test_constant_column(self):
        x = np.column_stack([np.ones(20), np.arange(20.0)])
        with pytest.raises(ConstantColumn):
            fit_knockoff_model(x)

    def test_row_permutation_invariance(self):
        gen = np.random.default_rng(2)
        x = gen.standard_normal((60, 4))
        perm = gen.permutation(60)
        a = fit_knockoff_model(x)
        b = fit_knockoff_model(x[perm])
        assert np.allclose(a.sigma_hat, b.sigma_hat)
        assert np.allclose(a.d, b.d)

    def test_auto_gamma_respects_floor(self):
        gen = np.random.default_rng(3)
        # p > n forces a singular sample covariance, so gamma must move
        x = gen.standard_normal((10, 20))
        floor = 0.05
        model = fit_knockoff_model(x, ShrinkageConfig(eigen_floor=floor))
        assert model.gamma > 0.0
        corr = model.sigma_hat / np.sqrt(np.outer(np.diag(model.sigma_hat), np.diag(model.sigma_hat)))
        assert np.linalg.eigvalsh(corr)[0] >= floor - 1e-8


class TestExactModel:
    def test_identity_truth(self):
        model = exact_model_from_truth(np.eye(3))
        assert model.s == pytest.approx(1.0, abs=1e-5)
        assert np.allclose(model.d, 1.0, atol=1e-5)

    def test_s_from_min_eigenvalue(self):
        # correlation matrix with smallest eigenvalue 0.2
        corr = np.array([[1.0, 0.8], [0.8, 1.0]])
        model = exact_model_from_truth(corr)
        assert model.s == pytest.approx(0.4, abs=1e-5)

    def test_non_pd_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            exact_model_from_truth(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_conditional_covariance_is_psd(self):
        gen = np.random.default_rng(4)
        for _ in range(10):
            m = gen.standard_normal((6, 6))
            sigma = m.T @ m + 0.1 * np.eye(6)
            model = exact_model_from_truth(sigma)
            cond = 2.0 * np.diag(model.d) - (model.d[:, None] * model.omega_hat) * model.d[None, :]
            cholesky(cond + 1e-10 * np.eye(6))


class TestSampleKnockoffs:
    def test_d_zero_identity(self):
        from tski.knockoffs import GaussianKnockoffModel

        p = 3
        model = GaussianKnockoffModel(
            mu=np.zeros(p), sigma_hat=np.eye(p), omega_hat=np.eye(p),
            d=np.zeros(p), cond_mean_mat=np.eye(p), cond_cov_chol=np.zeros((p, p)),
        )
        gen = np.random.default_rng(5)
        x = gen.standard_normal((40, p))
        xt = sample_knockoffs(model, x, RngStream(1))
        assert np.array_equal(xt, x)

    def test_univariate_law(self):
        model = exact_model_from_truth(np.array([[1.0]]))
        x = np.zeros((100_000, 1))
        xt = sample_knockoffs(model, x, RngStream(2))
        assert abs(xt.mean()) <= 0.02
        assert abs(xt.var() - 1.0) <= 0.03

    def test_deterministic(self):
        gen = np.random.default_rng(6)
        x = gen.standard_normal((30, 4))
        model = fit_knockoff_model(x)
        a = sample_knockoffs(model, x, RngStream(7, 2))
        b = sample_knockoffs(model, x, RngStream(7, 2))
        assert np.array_equal(a, b)

    def test_dimension_mismatch(self):
        model = exact_model_from_truth(np.eye(3))
        with pytest.raises(DimensionMismatch):
            sample_knockoffs(model, np.zeros((5, 4)), RngStream(0))

    def test_never_reads_response(self):
        # generation is a function of (model, x, rng) alone; rerunning with
        # the same stream after unrelated draws must not change the result
        gen = np.random.default_rng(8)
        x = gen.standard_normal((25, 3))
        model = fit_knockoff_model(x)
        first = sample_knockoffs(model, x, RngStream(9))
        np.random.default_rng(123).standard_normal(1000)
        second = sample_knockoffs(model, x, RngStream(9))
        assert np.array_equal(first, second)

    def test_pooled_covariance_moment_match(self):
        # exchangeability surrogate: cov([X, Xt]) matches the target blocks
        gen = np.random.default_rng(10)
        p, n = 4, 100_000
        m = gen.standard_normal((p, p))
        sigma = m.T @ m + 0.5 * np.eye(p)
        chol = np.linalg.cholesky(sigma)
        x = gen.standard_normal((n, p)) @ chol.T
        model = exact_model_from_truth(sigma)
        xt = sample_knockoffs(model, x, RngStream(11))
        z = np.hstack([x, xt])
        pooled = z.T @ z / n
        target = np.block([
            [sigma, sigma - np.diag(model.d)],
            [sigma - np.diag(model.d), sigma],
        ])
        # Gaussian covariance-entry MC standard errors
        dz = np.diag(target)
        se = np.sqrt((np.outer(dz, dz) + target**2) / n)
        assert np.max(np.abs(pooled - target) / se) <= 5.0
