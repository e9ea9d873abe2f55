"""Regression random forest and the swap-based MDA knockoff statistic.

The forest is trained on the augmented design [U, Utilde] whose columns
come in original/knockoff pairs (j, j+p). All node-level randomness is
drawn per (tree, node-creation order) and candidate features are sampled
as whole pairs, never single slots. Swapping the contents of a pair
therefore relabels the fitted trees instead of perturbing them, which is
what makes the MDA sign-flip exact under column swaps (up to exact ties
in variance reduction, which cannot occur on tie-free data).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyData
from .numerics import RngStream


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters; defaults mirror common regression-forest practice.

    mtry counts candidate feature slots; it is rounded up to a whole
    number of original/knockoff pairs when sampling (see module note).
    """

    n_trees: int = 100
    mtry: int | None = None  # None: ceil(m/3) for m feature slots
    min_leaf: int = 5
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")


@dataclass
class Tree:
    """Array-of-nodes binary regression tree.

    feature[k] < 0 marks a leaf with prediction value[k]; otherwise rows
    with z[feature[k]] <= threshold[k] go to left[k], the rest to right[k].
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


@dataclass
class Forest:
    trees: list
    config: ForestConfig
    seed: int
    n_features: int


def _best_split(sub, y_node, min_leaf):
    """Best (candidate index, threshold) by variance reduction.

    sub: node rows by candidate slots. Returns (col, threshold) or None.
    Exact score ties across candidates (which happen whenever two
    columns induce the same row partition) are broken by the smaller
    threshold, a content-derived key, so the choice is invariant to the
    order candidates appear in; within a column the lowest qualifying
    split position wins.
    """
    nr = sub.shape[0]
    order = np.argsort(sub, axis=0, kind="stable")
    sv = np.take_along_axis(sub, order, axis=0)
    sy = y_node[order]
    csum = np.cumsum(sy, axis=0)
    csq = np.cumsum(sy * sy, axis=0)
    tot_sum = csum[-1]
    tot_sq = csq[-1]

    # Split after sorted position i (left gets i+1 rows).
    upper = csum[:-1]
    upper_sq = csq[:-1]
    nl = np.arange(1, nr)[:, None].astype(float)
    nright = nr - nl
    valid = (sv[:-1] < sv[1:]) & (nl >= min_leaf) & (nright >= min_leaf)
    if not valid.any():
        return None
    sse_left = upper_sq - upper * upper / nl
    sse_right = (tot_sq - upper_sq) - (tot_sum - upper) ** 2 / nright
    score = np.where(valid, -(sse_left + sse_right), -np.inf)
    best_per_col = score.max(axis=0)
    top = best_per_col.max()
    if not np.isfinite(top):
        return None
    threshold = np.inf
    col = -1
    for c in np.nonzero(best_per_col == top)[0]:
        pos = int(np.argmax(score[:, c]))
        thr = 0.5 * (sv[pos, c] + sv[pos + 1, c])
        if thr < threshold:
            threshold = thr
            col = int(c)
    return col, threshold


def _grow_tree(z, v, rows, cfg, pairs, n_pairs_draw, node_stream):
    """Grow one tree; node RNG is addressed by creation order."""
    feature, threshold, left, right, value = [], [], [], [], []
    stack = [(rows, None, False)]  # (row indices, parent node id, is_right)
    node_ord = 0
    while stack:
        node_rows, parent, is_right = stack.pop()
        node_id = len(feature)
        if parent is not None:
            if is_right:
                right[parent] = node_id
            else:
                left[parent] = node_id
        y_node = v[node_rows]
        split = None
        if node_rows.size >= 2 * cfg.min_leaf and np.ptp(y_node) > 0.0:
            gen = node_stream.child(node_ord).generator()
            chosen = gen.choice(pairs, size=n_pairs_draw, replace=False)
            cand = np.empty(2 * n_pairs_draw, dtype=np.int64)
            cand[0::2] = chosen
            cand[1::2] = chosen + pairs
            split = _best_split(z[node_rows][:, cand], y_node, cfg.min_leaf)
        node_ord += 1
        if split is None:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(y_node.mean()))
            continue
        col, thr = split
        slot = int(cand[col])
        go_left = z[node_rows, slot] <= thr
        feature.append(slot)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        value.append(float(y_node.mean()))
        # Push right first so the left child is created (and numbered) first.
        stack.append((node_rows[~go_left], node_id, True))
        stack.append((node_rows[go_left], node_id, False))
    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=float),
    )


def fit_forest(z, v, cfg=ForestConfig(), rng=RngStream(0)):
    """Fit a CART-style regression forest on an n x 2p pair design."""
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    if z.ndim != 2 or z.shape[0] == 0:
        raise EmptyData("z must be a nonempty 2-D matrix")
    if v.shape != (z.shape[0],):
        raise DimensionMismatch(f"v {v.shape} vs z {z.shape}")
    n, m = z.shape
    if m % 2 != 0:
        raise DimensionMismatch("the design must have an even number of columns (pairs)")
    pairs = m // 2
    mtry = cfg.mtry if cfg.mtry is not None else int(np.ceil(m / 3))
    mtry = min(mtry, m)
    n_pairs_draw = min(pairs, int(np.ceil(mtry / 2)))

    trees = []
    all_rows = np.arange(n)
    for t in range(cfg.n_trees):
        if cfg.bootstrap:
            rows = rng.child(t, 0).generator().integers(0, n, size=n)
        else:
            rows = all_rows
        trees.append(_grow_tree(z, v, rows, cfg, pairs, n_pairs_draw, rng.child(t, 1)))
    return Forest(trees=trees, config=cfg, seed=rng.seed, n_features=m)


def _apply_tree(tree, z):
    """Leaf values reached by every row of z, vectorized over rows."""
    idx = np.zeros(z.shape[0], dtype=np.int64)
    while True:
        feat = tree.feature[idx]
        active = feat >= 0
        if not active.any():
            break
        rows = np.nonzero(active)[0]
        cur = idx[rows]
        go_left = z[rows, feat[rows]] <= tree.threshold[cur]
        idx[rows] = np.where(go_left, tree.left[cur], tree.right[cur])
    return tree.value[idx]


def predict_many(forest, z):
    """Forest predictions for each row of z (mean over trees)."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] != forest.n_features:
        raise DimensionMismatch(f"z has shape {z.shape}, expected (*, {forest.n_features})")
    out = np.zeros(z.shape[0])
    for tree in forest.trees:
        out += _apply_tree(tree, z)
    return out / len(forest.trees)


def predict(forest, z):
    """Prediction for a single feature vector."""
    z = np.asarray(z, dtype=float)
    if z.shape != (forest.n_features,):
        raise DimensionMismatch(f"z has shape {z.shape}, expected ({forest.n_features},)")
    return float(predict_many(forest, z[None, :])[0])


def mda_statistics(forest, u, ut, v):
    """Swap-based mean-decrease-accuracy statistics W_1..W_p.

    W_j is the average over rows of the squared-error difference between
    evaluating the fitted forest with the original coordinate j replaced
    by its knockoff, and with the knockoff coordinate replaced by the
    original. One fitted forest serves all 2p swap evaluations.
    """
    u = np.asarray(u, dtype=float)
    ut = np.asarray(ut, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != ut.shape or u.ndim != 2:
        raise DimensionMismatch(f"u {u.shape} vs ut {ut.shape}")
    n, p = u.shape
    if forest.n_features != 2 * p or v.shape != (n,):
        raise DimensionMismatch("forest, design, and response dimensions disagree")
    z = np.hstack([u, ut])
    w = np.empty(p)
    for j in range(p):
        z1 = z.copy()
        z1[:, j] = ut[:, j]  # original coordinate knocked out
        z2 = z.copy()
        z2[:, j + p] = u[:, j]  # knockoff coordinate restored to original
        err1 = v - predict_many(forest, z1)
        err2 = v - predict_many(forest, z2)
        w[j] = np.mean(err1 * err1 - err2 * err2)
    return w
