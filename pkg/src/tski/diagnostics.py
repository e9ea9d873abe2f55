"""Robustness diagnostics: Gaussian KL statistics, the FDR-bound
evaluator, and the serial-dependence (mixing) term.

The FDR of the selection procedure is bounded by

    min over eps of [ tau_star * exp(eps) + sum_k P(max_j KL_j^k > eps) ]
      + mixing term,

where KL_j^k accumulates, over the rows of subsample k, the log ratio
between two univariate Gaussian conditionals evaluated at the observed
(x_ij, xt_ij) pair: the true law of X_j given the other coordinates and
the law the knockoff model implies for coordinate j. With an exact model
both laws coincide, every KL statistic is zero, and the bound collapses
to tau_star.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGrid
from .filters import subsample_indices
from .knockoffs import sample_knockoffs
from .numerics import RngStream, solve_spd


def default_epsilon_grid():
    """30 log-spaced points in [1e-4, 5]."""
    return np.geomspace(1e-4, 5.0, 30)


@dataclass(frozen=True)
class KlSamples:
    """Monte Carlo draws of per-subsample KL statistics.

    draws[r][k] is the p-vector of KL statistics for subsample k in
    Monte Carlo repetition r. A single observed dataset is the R = 1
    plug-in case.
    """

    draws: tuple
    epsilon_grid: np.ndarray = field(default_factory=default_epsilon_grid)

    def __post_init__(self):
        grid = np.asarray(self.epsilon_grid, dtype=float)
        if grid.size == 0:
            raise EmptyGrid("epsilon grid must be nonempty")
        if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("epsilon grid must be positive and strictly increasing")
        if not self.draws:
            raise ValueError("need at least one Monte Carlo draw")

    @property
    def n_subsamples(self):
        return len(self.draws[0])


@dataclass(frozen=True)
class MixingBoundParams:
    c0: float
    rho: float
    q: int
    n: int

    def __post_init__(self):
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must be in [0, 1)")
        if self.q < 0 or self.n < 1:
            raise ValueError("q must be >= 0 and n >= 1")


def mixing_bound(params):
    """Serial-dependence contribution c0 * rho^q * n.

    rho = 0 encodes independent rows, whose total-variation term vanishes
    for every q, so the bound is exactly 0 regardless of q.
    """
    if params.rho == 0.0:
        return 0.0
    return params.c0 * params.rho**params.q * params.n


def _conditional_terms(sigma, x, mu):
    """Per-row conditional means and variances of each coordinate.

    For N(mu, sigma), coordinate j given the rest is Gaussian with
    variance 1/Theta_jj and mean mu_j + (x_j - mu_j) - (Theta (x - mu))_j
    / Theta_jj, where Theta is the precision matrix.
    """
    theta = solve_spd(sigma, np.eye(sigma.shape[0]))
    theta = 0.5 * (theta + theta.T)
    diag = np.diag(theta)
    centered = x - mu
    means = mu + centered - (centered @ theta) / diag
    return means, 1.0 / diag


def gaussian_kl_stats(true_sigma, model, x_sub, xt_sub, true_mu=None):
    """Accumulated log-density-ratio statistics, one per coordinate.

    true_sigma parameterizes the actual law of a covariate row; the
    model's sigma_hat induces the knockoff generator's coordinatewise
    conditional. Both are evaluated at the observed (x_ij, xt_ij) pairs
    and the summands are added over the rows supplied (one subsample).
    """
    x_sub = np.asarray(x_sub, dtype=float)
    xt_sub = np.asarray(xt_sub, dtype=float)
    true_sigma = np.asarray(true_sigma, dtype=float)
    mu = model.mu if true_mu is None else np.asarray(true_mu, dtype=float)

    m_true, v_true = _conditional_terms(true_sigma, x_sub, mu)
    m_model, v_model = _conditional_terms(model.sigma_hat, x_sub, model.mu)
    # log ratio of N(m,v) densities at a versus b: ((b-m)^2-(a-m)^2)/(2v)
    summand = ((xt_sub - m_true) ** 2 - (x_sub - m_true) ** 2) / (2.0 * v_true)
    summand += ((x_sub - m_model) ** 2 - (xt_sub - m_model) ** 2) / (2.0 * v_model)
    return summand.sum(axis=0)


def fdr_bound(kl, tau_star, mixing=0.0):
    """Evaluate the bound at its best epsilon on the grid."""
    return fdr_bound_report(kl, tau_star, mixing)["bound"]


def fdr_bound_report(kl, tau_star, mixing=0.0):
    """Bound plus its decomposition (base term, KL term, mixing term)."""
    if not 0.0 < tau_star < 1.0:
        raise ValueError("tau_star must be in (0, 1)")
    grid = np.asarray(kl.epsilon_grid, dtype=float)
    n_draws = len(kl.draws)
    n_sub = kl.n_subsamples
    # maxima[r, k] = max_j KL_j^k in draw r
    maxima = np.array([[np.max(draw[k]) for k in range(n_sub)] for draw in kl.draws])
    best = None
    for eps in grid:
        base = tau_star * np.exp(eps)
        kl_term = float(np.sum(maxima > eps)) / n_draws
        total = base + kl_term
        if best is None or total < best["base_term"] + best["kl_term"]:
            best = {"epsilon": float(eps), "base_term": float(base), "kl_term": kl_term}
    best["mixing_term"] = float(mixing)
    best["bound"] = best["base_term"] + best["kl_term"] + best["mixing_term"]
    return best


def kl_draws_from_simulation(true_sigma, model, n, q, reps, rng: RngStream, true_mu=None):
    """Fresh-row Monte Carlo draws of the per-subsample KL statistics.

    Each repetition draws n i.i.d. rows from N(mu, true_sigma), samples
    knockoffs from the model, splits the rows into the q+1 subsamples,
    and evaluates gaussian_kl_stats on each.
    """
    true_sigma = np.asarray(true_sigma, dtype=float)
    p = true_sigma.shape[0]
    mu = np.zeros(p) if true_mu is None else np.asarray(true_mu, dtype=float)
    chol = np.linalg.cholesky(true_sigma)
    draws = []
    for r in range(reps):
        gen = rng.child(r, 0).generator()
        x = mu + gen.standard_normal((n, p)) @ chol.T
        xt = sample_knockoffs(model, x, rng.child(r, 1))
        per_sub = [
            gaussian_kl_stats(true_sigma, model, x[idx], xt[idx], true_mu=mu)
            for idx in subsample_indices(n, q)
        ]
        draws.append(per_sub)
    return KlSamples(draws=tuple(tuple(d) for d in draws))


def kl_plugin_from_data(reference_sigma, model, x, xt, q, true_mu=None):
    """Single-draw plug-in KL statistics on observed data (surrogate)."""
    x = np.asarray(x, dtype=float)
    per_sub = [
        gaussian_kl_stats(reference_sigma, model, x[idx], xt[idx], true_mu=true_mu)
        for idx in subsample_indices(x.shape[0], q)
    ]
    return KlSamples(draws=(tuple(per_sub),))
