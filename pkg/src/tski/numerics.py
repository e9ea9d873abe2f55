"""Dense linear algebra, RNG streams, and column standardization.

Matrices are plain two-dimensional float64 numpy arrays throughout the
package. The Cholesky routine is written out explicitly (outer-product
form) so that the positive-definiteness test is a documented pivot
threshold rather than whatever the backing LAPACK build happens to do;
everything downstream (precision matrices, conditional samplers, the
minimum-eigenvalue bisection) is built on top of it.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConstantColumn, NonSymmetric, NotPositiveDefinite

# Relative pivot threshold: pivots at or below PIVOT_RTOL * max(diag)
# are treated as rank deficiency, not round-off.
PIVOT_RTOL = 1e-12
SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    (seed, stream_id, path) fully determine the output sequence.
    ``child`` derives an independent-quality substream, so a run can
    hand disjoint streams to replications, subsamples, and trees without
    coordination. A stream is meant to be consumed by a single owner at
    a time.
    """

    seed: int
    stream_id: int = 0
    path: tuple = ()

    def child(self, *ids):
        """Derive a substream addressed by one or more integers."""
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(i) for i in ids))

    def generator(self):
        """Fresh numpy Generator positioned at the stream's origin.

        Calling this twice yields two generators producing identical
        sequences; determinism everywhere else rests on this.
        """
        return np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,) + self.path)
        )


@dataclass(frozen=True)
class StandardizationInfo:
    """Per-column means and population (divisor n) standard deviations."""

    means: np.ndarray
    sds: np.ndarray


def _check_symmetric(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSymmetric(f"expected a square matrix, got shape {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale > 0 and np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
        raise NonSymmetric("matrix is not symmetric within tolerance")
    return a


def cholesky(a):
    """Lower-triangular L with a = L @ L.T.

    Raises NotPositiveDefinite when any pivot falls at or below
    PIVOT_RTOL times the largest diagonal entry of ``a``.
    """
    a = _check_symmetric(a)
    p = a.shape[0]
    c = 0.5 * (a + a.T)  # exact symmetry for the elimination
    tol = PIVOT_RTOL * max(np.max(np.diag(c)), 0.0) if p else 0.0
    lower = np.zeros_like(c)
    for j in range(p):
        pivot = c[j, j]
        if pivot <= tol:
            raise NotPositiveDefinite(
                f"pivot {pivot:.3e} at column {j} is at or below tolerance {tol:.3e}"
            )
        root = np.sqrt(pivot)
        lower[j:, j] = c[j:, j] / root
        tail = lower[j + 1 :, j]
        c[j + 1 :, j + 1 :] -= np.outer(tail, tail)
    return lower


def _cholesky_succeeds(a):
    try:
        cholesky(a)
    except NotPositiveDefinite:
        return False
    return True


def min_eigenvalue(a):
    """Smallest eigenvalue of a symmetric matrix.

    Bisection on "cholesky(a - lam*I) succeeds" over
    [-max|a|*p, max|a|*p]; accurate to about 1e-7 relative.
    """
    a = _check_symmetric(a)
    p = a.shape[0]
    scale = max(np.max(np.abs(a)), 1e-300) * p
    lo, hi = -scale, scale
    eye = np.eye(p)
    # Invariant: lambda_min > lo always; lambda_min <= hi after the first
    # failing probe (a - hi*I at hi = scale can only be PD if scale == 0).
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _cholesky_succeeds(a - mid * eye):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-8 * max(abs(lo), abs(hi), 1e-4 * scale):
            break
    return 0.5 * (lo + hi)


def solve_spd(a, b):
    """Solve a @ x = b for symmetric positive definite ``a``."""
    lower = cholesky(a)
    b = np.asarray(b, dtype=float)
    y = solve_triangular(lower, b, lower=True)
    return solve_triangular(lower.T, y, lower=False)


def standardize_columns(x):
    """Center each column and scale it to population sd 1.

    Returns the standardized matrix and the StandardizationInfo used.
    Raises ConstantColumn when a column's sd is at or below 1e-12.
    """
    x = np.asarray(x, dtype=float)
    means = x.mean(axis=0)
    sds = x.std(axis=0)  # divisor n
    bad = np.nonzero(sds <= 1e-12)[0]
    if bad.size:
        raise ConstantColumn(int(bad[0]))
    return (x - means) / sds, StandardizationInfo(means=means, sds=sds)
