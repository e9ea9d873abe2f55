"""Coordinate-descent Lasso on the augmented original+knockoff design.

Objective, exactly as consumed by the knockoff statistics:

    (1/n) * sum_i (y_i - x_i @ beta)^2 + lambda * sum_j |beta_j|

Note the 1/n (not 1/(2n)) normalization; the per-coordinate update is
therefore a soft threshold at lambda/2. Inputs are expected standardized
(columns) and centered (response); no intercept is fit. Convergence is
declared on the KKT residual, not on coefficient movement, so a
converged fit is a certified stationary point at tolerance cfg.tol.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DimensionMismatch
from .numerics import RngStream


@dataclass(frozen=True)
class CrossValidated:
    """Pick lambda by k-fold CV over a log-spaced path."""

    folds: int = 5
    path_length: int = 50
    path_min_ratio: float = 1e-3

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not 0.0 < self.path_min_ratio < 1.0:
            raise ValueError("path_min_ratio must be in (0, 1)")


@dataclass(frozen=True)
class LassoConfig:
    lam: float | CrossValidated = field(default_factory=CrossValidated)
    max_iters: int = 10_000
    tol: float = 1e-7


@dataclass(frozen=True)
class LassoFit:
    beta: np.ndarray
    lambda_used: float
    n_iters: int
    converged: bool


@njit(cache=True)
def _coord_pass(x, r, beta, col_scale, half, active_only):
    """One cyclic pass of single-coordinate updates; returns max |move|."""
    n, m = x.shape
    delta = 0.0
    for j in range(m):
        bj = beta[j]
        if col_scale[j] <= 0.0 or (active_only and bj == 0.0):
            continue
        rho = 0.0
        for i in range(n):
            rho += x[i, j] * r[i]
        rho = rho / n + col_scale[j] * bj
        if rho > half:
            bnew = (rho - half) / col_scale[j]
        elif rho < -half:
            bnew = (rho + half) / col_scale[j]
        else:
            bnew = 0.0
        diff = bnew - bj
        if diff != 0.0:
            for i in range(n):
                r[i] -= diff * x[i, j]
            beta[j] = bnew
            if abs(diff) > delta:
                delta = abs(diff)
    return delta


@njit(cache=True)
def _pair_pass(x, r, beta, diff_scale, lam, p, active_only):
    """Joint moves along (e_j - e_{j+p}) for each column pair.

    Near-duplicate pairs (originals vs their knockoffs) make plain
    coordinate descent zigzag; the exact line search along the pair
    difference removes that. Each move minimizes the objective over
    beta_j + t, beta_{j+p} - t, a piecewise quadratic in t. Returns the
    max |t| applied.
    """
    n = x.shape[0]
    half = 0.5 * lam
    delta = 0.0
    for j in range(p):
        a = beta[j]
        b = beta[j + p]
        if active_only and a == 0.0 and b == 0.0:
            continue
        quad = diff_scale[j]
        if quad <= 1e-300:
            continue
        corr = 0.0
        for i in range(n):
            corr += (x[i, j] - x[i, j + p]) * r[i]
        corr /= n
        base_pen = abs(a) + abs(b)
        best_t = 0.0
        best_gain = 0.0
        # Stationary points of each sign region, then the two kinks.
        for s1 in (-1.0, 1.0):
            for s2 in (-1.0, 1.0):
                t = (corr - half * (s1 - s2)) / quad
                if s1 * (a + t) < 0.0 or s2 * (b - t) < 0.0:
                    continue
                gain = quad * t * t - 2.0 * corr * t + lam * (abs(a + t) + abs(b - t) - base_pen)
                if gain < best_gain:
                    best_gain = gain
                    best_t = t
        for t in (-a, b):
            gain = quad * t * t - 2.0 * corr * t + lam * (abs(a + t) + abs(b - t) - base_pen)
            if gain < best_gain:
                best_gain = gain
                best_t = t
        if best_t != 0.0 and best_gain < -1e-15:
            for i in range(n):
                r[i] -= best_t * (x[i, j] - x[i, j + p])
            beta[j] = a + best_t
            beta[j + p] = b - best_t
            if abs(best_t) > delta:
                delta = abs(best_t)
    return delta


@njit(cache=True)
def _kkt_residual(x, r, beta, lam):
    n, m = x.shape
    kkt = 0.0
    for j in range(m):
        g = 0.0
        for i in range(n):
            g += x[i, j] * r[i]
        g *= 2.0 / n
        if beta[j] > 0.0:
            resid = abs(g - lam)
        elif beta[j] < 0.0:
            resid = abs(g + lam)
        else:
            resid = abs(g) - lam
            if resid < 0.0:
                resid = 0.0
        if resid > kkt:
            kkt = resid
    return kkt


@njit(cache=True)
def _cd_kernel(x, y, beta, lam, max_iters, tol):
    """Cyclic coordinate descent with active-set sweeps and pair moves.

    x is Fortran-ordered n*m, beta is updated in place (warm start in,
    solution out). Even-width designs get the pair-difference line
    search on (j, j+p) interleaved with the coordinate passes. Returns
    (sweeps_used, kkt_residual, converged); convergence means the KKT
    residual is at or below tol.
    """
    n, m = x.shape
    half = 0.5 * lam
    r = y - x @ beta
    col_scale = np.empty(m)
    for j in range(m):
        s = 0.0
        for i in range(n):
            s += x[i, j] * x[i, j]
        col_scale[j] = s / n
    p = m // 2
    paired = m >= 2 and m % 2 == 0
    diff_scale = np.zeros(p if paired else 1)
    if paired:
        for j in range(p):
            s = 0.0
            for i in range(n):
                d = x[i, j] - x[i, j + p]
                s += d * d
            diff_scale[j] = s / n

    sweeps = 0
    kkt = np.inf
    while sweeps < max_iters:
        _coord_pass(x, r, beta, col_scale, half, False)
        if paired:
            _pair_pass(x, r, beta, diff_scale, lam, p, False)
        sweeps += 1

        while sweeps < max_iters:
            delta = _coord_pass(x, r, beta, col_scale, half, True)
            if paired:
                dp = _pair_pass(x, r, beta, diff_scale, lam, p, True)
                if dp > delta:
                    delta = dp
            sweeps += 1
            if delta <= 0.1 * tol:
                break

        kkt = _kkt_residual(x, r, beta, lam)
        if kkt <= tol:
            return sweeps, kkt, True
    return sweeps, kkt, False


def coordinate_descent(x, y, lam, cfg=LassoConfig(), beta0=None):
    """Minimize the penalized objective at a fixed lambda.

    Returns a LassoFit; converged=False means the KKT residual was still
    above cfg.tol after cfg.max_iters sweeps (the fit is returned anyway).
    """
    x = np.asfortranarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"x {x.shape} vs y {y.shape}")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    m = x.shape[1]
    beta = np.zeros(m) if beta0 is None else np.array(beta0, dtype=float)
    if beta.shape != (m,):
        raise DimensionMismatch(f"beta0 {beta.shape} vs {m} columns")
    sweeps, _, converged = _cd_kernel(x, y, beta, float(lam), cfg.max_iters, cfg.tol)
    return LassoFit(beta=beta, lambda_used=float(lam), n_iters=int(sweeps), converged=bool(converged))


def lambda_max(x, y):
    """Smallest lambda whose solution is identically zero."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 2.0 * np.max(np.abs(x.T @ y)) / x.shape[0]


def lambda_path(x, y, cfg=CrossValidated()):
    """Log-spaced lambdas from lambda_max down to its path_min_ratio multiple."""
    top = lambda_max(x, y)
    if top <= 0.0:
        top = 1.0  # y == 0: any positive path works, everything fits to zero
    return np.geomspace(top, cfg.path_min_ratio * top, cfg.path_length)


def _path_fits(x, y, lams, cfg):
    """Warm-started fits along a decreasing lambda path."""
    betas = np.empty((len(lams), x.shape[1]))
    beta = np.zeros(x.shape[1])
    for i, lam in enumerate(lams):
        fit = coordinate_descent(x, y, lam, cfg, beta0=beta)
        beta = fit.beta
        betas[i] = beta
    return betas


def cv_select_lambda(x, y, cfg, rng: RngStream):
    """Lambda minimizing pooled out-of-fold squared error.

    Folds are contiguous blocks of a seed-determined shuffle of the row
    indices. Ties prefer the larger lambda (paths are decreasing).
    Fold fits run at a relaxed KKT tolerance (CV errors cannot resolve
    differences that small); only the final refit uses cfg.tol.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    cv = cfg.lam if isinstance(cfg.lam, CrossValidated) else CrossValidated()
    if n < cv.folds:
        raise ValueError(f"need at least {cv.folds} rows for {cv.folds}-fold CV")
    fold_cfg = LassoConfig(lam=cfg.lam, max_iters=cfg.max_iters, tol=max(cfg.tol, 3e-4))
    lams = lambda_path(x, y, cv)
    perm = rng.generator().permutation(n)
    blocks = np.array_split(perm, cv.folds)
    sse = np.zeros(len(lams))
    for block in blocks:
        mask = np.ones(n, dtype=bool)
        mask[block] = False
        betas = _path_fits(np.asfortranarray(x[mask]), y[mask], lams, fold_cfg)
        pred = x[block] @ betas.T  # held-out rows by lambdas
        sse += np.sum((y[block][:, None] - pred) ** 2, axis=0)
    return float(lams[int(np.argmin(sse))])
