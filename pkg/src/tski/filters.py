"""Knockoff threshold, e-values, e-BH selection, and the TSKI driver.

The driver generates one knockoff matrix on the full sample, partitions
the rows into q+1 interleaved subsamples, runs a knockoff filter on each,
turns the per-subsample selections into e-values, averages them, and
applies e-BH at the target FDR level. Variable indices in results are
1-based; row indices inside this module are storage (0-based) positions.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, LengthMismatch, TooFewObservations
from .forest import ForestConfig, fit_forest, mda_statistics
from .knockoffs import ShrinkageConfig, sample_knockoffs
from .lasso import CrossValidated, LassoConfig, coordinate_descent, cv_select_lambda
from .numerics import RngStream, standardize_columns

LCD = "lcd"
MDA = "mda"


@dataclass(frozen=True)
class FilterParams:
    """Everything tski_run needs besides the data and the sampler."""

    q: int = 0
    tau_star: float = 0.2
    tau1: float | None = None  # None: tau_star / (q + 1)
    statistic: str = LCD
    lasso: LassoConfig = field(default_factory=LassoConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    shrinkage: ShrinkageConfig = field(default_factory=ShrinkageConfig)

    def __post_init__(self):
        if self.q < 0:
            raise ValueError("q must be >= 0")
        if not 0.0 < self.tau_star < 1.0:
            raise ValueError("tau_star must be in (0, 1)")
        if self.tau1 is not None and not 0.0 < self.tau1 < 1.0:
            raise ValueError("tau1 must be in (0, 1)")
        if self.statistic not in (LCD, MDA):
            raise ValueError(f"unknown statistic {self.statistic!r}")

    def effective_tau1(self):
        return self.tau1 if self.tau1 is not None else self.tau_star / (self.q + 1)


@dataclass(frozen=True)
class KnockoffStats:
    """Signed statistics for one subsample and their threshold.

    threshold is math.inf when no candidate magnitude qualifies; that
    subsample then contributes all-zero e-values.
    """

    w: np.ndarray
    threshold: float

    @property
    def finite(self):
        return math.isfinite(self.threshold)

    def selected(self):
        """1-based {j : W_j >= T}; empty when the threshold is infinite."""
        if not self.finite:
            return frozenset()
        return frozenset(int(j) + 1 for j in np.nonzero(self.w >= self.threshold)[0])


@dataclass(frozen=True)
class SubsampleResult:
    indices: np.ndarray  # 0-based row positions of H_k
    stats: KnockoffStats
    evalues: np.ndarray


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple  # 1-based variable indices, ascending
    k_hat: int
    evalues: np.ndarray
    per_subsample: list
    q: int
    tau1: float
    tau_star: float
    statistic: str
    seed: int
    sandwich_ok: bool

    def to_json_dict(self):
        subs = []
        for sub in self.per_subsample:
            subs.append(
                {
                    "indices": (sub.indices + 1).tolist(),
                    "w": sub.stats.w.tolist(),
                    "threshold": sub.stats.threshold if sub.stats.finite else None,
                    "finite_threshold": sub.stats.finite,
                    "evalues": sub.evalues.tolist(),
                }
            )
        return {
            "selected": list(self.selected),
            "k_hat": self.k_hat,
            "evalues": self.evalues.tolist(),
            "params": {
                "q": self.q,
                "tau1": self.tau1,
                "tau_star": self.tau_star,
                "statistic": self.statistic,
                "seed": self.seed,
            },
            "subsamples": subs,
        }


def subsample_indices(n, q):
    """Index sets H_1..H_{q+1}: stride q+1, offsets 0..q (0-based rows)."""
    if q < 0:
        raise ValueError("q must be >= 0")
    if n < q + 1:
        raise TooFewObservations(f"n={n} rows cannot form {q + 1} subsamples")
    return [np.arange(k, n, q + 1) for k in range(q + 1)]


def knockoff_threshold(w, tau1):
    """Smallest positive magnitude t with (1 + #{W <= -t}) / (#{W >= t} v 1) <= tau1.

    Returns math.inf when no candidate qualifies (min over the empty set).
    """
    if not 0.0 < tau1 < 1.0:
        raise ValueError("tau1 must be in (0, 1)")
    w = np.asarray(w, dtype=float)
    candidates = np.unique(np.abs(w[w != 0.0]))
    for t in candidates:
        neg = int(np.count_nonzero(w <= -t))
        pos = int(np.count_nonzero(w >= t))
        if (1 + neg) / max(pos, 1) <= tau1:
            return float(t)
    return math.inf


def evalues_single(w, threshold):
    """Per-variable e-values p * 1{W_j >= T} / (1 + #{W_s <= -T})."""
    w = np.asarray(w, dtype=float)
    p = w.size
    if not math.isfinite(threshold):
        return np.zeros(p)
    neg = int(np.count_nonzero(w <= -threshold))
    return p * (w >= threshold).astype(float) / (1 + neg)


def aggregate_evalues(evalue_vectors):
    """Coordinatewise arithmetic mean of the per-subsample e-values."""
    vectors = [np.asarray(e, dtype=float) for e in evalue_vectors]
    if not vectors:
        raise LengthMismatch("no e-value vectors to aggregate")
    length = vectors[0].size
    if any(v.size != length for v in vectors):
        raise LengthMismatch("e-value vectors have unequal lengths")
    return np.mean(np.stack(vectors), axis=0)


def ebh_select(e, tau_star):
    """e-BH: select the k_hat variables with e_j >= p / (tau_star * k_hat).

    k_hat = max{k : e_(k) >= p / (tau_star * k)} over descending order
    statistics, 0 (empty selection) when no k qualifies.
    """
    if not 0.0 < tau_star < 1.0:
        raise ValueError("tau_star must be in (0, 1)")
    e = np.asarray(e, dtype=float)
    p = e.size
    desc = np.sort(e)[::-1]
    ks = np.arange(1, p + 1)
    hits = np.nonzero(desc >= p / (tau_star * ks))[0]
    if hits.size == 0:
        return frozenset(), 0
    k_hat = int(hits[-1]) + 1
    cutoff = p / (tau_star * k_hat)
    selected = frozenset(int(j) + 1 for j in np.nonzero(e >= cutoff)[0])
    return selected, k_hat


def _pair_flips(u, ut):
    """Which pairs are out of canonical (lexicographically sorted) order.

    Used to present the Lasso with an input invariant under original/
    knockoff swaps, so the swap equivariance of the LCD statistic holds
    bit for bit and not merely up to solver tolerance.
    """
    n, p = u.shape
    flips = np.zeros(p, dtype=bool)
    for j in range(p):
        diff = u[:, j] != ut[:, j]
        if diff.any():
            i = int(np.argmax(diff))
            flips[j] = u[i, j] > ut[i, j]
    return flips


def lcd_statistics(v, u, ut, cfg=None, rng=RngStream(0)):
    """Lasso coefficient difference statistics |beta_j| - |beta_{j+p}|.

    The augmented design is standardized jointly and the response is
    centered; lambda comes from cfg.lam (cross-validated by default).
    """
    u = np.asarray(u, dtype=float)
    ut = np.asarray(ut, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != ut.shape or v.shape != (u.shape[0],):
        raise DimensionMismatch("response and designs disagree")
    cfg = cfg if cfg is not None else LassoConfig()
    n, p = u.shape

    flips = _pair_flips(u, ut)
    first = np.where(flips[None, :], ut, u)
    second = np.where(flips[None, :], u, ut)
    design, _ = standardize_columns(np.hstack([first, second]))
    y = v - v.mean()

    if isinstance(cfg.lam, CrossValidated):
        lam = cv_select_lambda(design, y, cfg, rng)
    else:
        lam = float(cfg.lam)
    fit = coordinate_descent(design, y, lam, cfg)
    abs_first = np.abs(fit.beta[:p])
    abs_second = np.abs(fit.beta[p:])
    orig = np.where(flips, abs_second, abs_first)
    knock = np.where(flips, abs_first, abs_second)
    return orig - knock


def _statistic_for_subsample(params, v, u, ut, rng):
    if params.statistic == LCD:
        return lcd_statistics(v, u, ut, params.lasso, rng)
    forest = fit_forest(np.hstack([u, ut]), v, params.forest, rng)
    return mda_statistics(forest, u, ut, v)


def tski_run(y, x, model, params, rng: RngStream):
    """Run the full subsample + e-value + e-BH selection procedure.

    Knockoffs are generated once on the full sample and row-partitioned;
    subsample k's statistic gets the substream rng.child(1, k), so the
    whole run is reproducible from (data, model, params, rng).
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.ndim != 1 or x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"y {y.shape} vs x {x.shape}")
    n, p = x.shape
    tau1 = params.effective_tau1()

    xt = sample_knockoffs(model, x, rng.child(0))
    index_sets = subsample_indices(n, params.q)

    per_subsample = []
    evalue_vectors = []
    for k, idx in enumerate(index_sets):
        w = _statistic_for_subsample(params, y[idx], x[idx], xt[idx], rng.child(1, k))
        threshold = knockoff_threshold(w, tau1)
        evals = evalues_single(w, threshold)
        per_subsample.append(
            SubsampleResult(indices=idx, stats=KnockoffStats(w=w, threshold=threshold), evalues=evals)
        )
        evalue_vectors.append(evals)

    evalues = aggregate_evalues(evalue_vectors)
    selected, k_hat = ebh_select(evalues, params.tau_star)

    subsets = [sub.stats.selected() for sub in per_subsample]
    inter = frozenset.intersection(*subsets)
    union = frozenset.union(*subsets)
    sandwich_ok = (not selected) or (inter <= selected <= union)

    return SelectionResult(
        selected=tuple(sorted(selected)),
        k_hat=k_hat,
        evalues=evalues,
        per_subsample=per_subsample,
        q=params.q,
        tau1=tau1,
        tau_star=params.tau_star,
        statistic=params.statistic,
        seed=rng.seed,
        sandwich_ok=bool(sandwich_ok),
    )
