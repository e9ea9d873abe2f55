import math

import numpy as np
import pytest

from tski.errors import LengthMismatch, TooFewObservations
from tski.filters import (
    FilterParams,
    aggregate_evalues,
    ebh_select,
    evalues_single,
    knockoff_threshold,
    subsample_indices,
)


def threshold_oracle(w, tau1):
    """Exhaustive enumeration over every candidate magnitude."""
    w = np.asarray(w, dtype=float)
    best = math.inf
    for t in sorted(set(abs(v) for v in w if v != 0.0)):
        neg = sum(1 for v in w if v <= -t)
        pos = sum(1 for v in w if v >= t)
        if (1 + neg) / max(pos, 1) <= tau1 and t < best:
            best = t
    return best


def ebh_oracle(e, tau_star):
    """Brute force over every candidate k."""
    e = np.asarray(e, dtype=float)
    p = e.size
    desc = np.sort(e)[::-1]
    k_hat = 0
    for k in range(1, p + 1):
        if desc[k - 1] >= p / (tau_star * k):
            k_hat = k
    if k_hat == 0:
        return frozenset(), 0
    return frozenset(int(j) + 1 for j in range(p) if e[j] >= p / (tau_star * k_hat)), k_hat


class TestSubsampleIndices:
    def test_n10_q1(self):
        h = subsample_indices(10, 1)
        # 1-based: H_1 = {1,3,5,7,9}, H_2 = {2,4,6,8,10}
        assert [list(s + 1) for s in h] == [[1, 3, 5, 7, 9], [2, 4, 6, 8, 10]]

    def test_n7_q2(self):
        h = subsample_indices(7, 2)
        assert [list(s + 1) for s in h] == [[1, 4, 7], [2, 5], [3, 6]]

    def test_q0_single_block(self):
        h = subsample_indices(5, 0)
        assert [list(s + 1) for s in h] == [[1, 2, 3, 4, 5]]

    def test_partition(self):
        for n, q in [(10, 1), (7, 2), (23, 4), (5, 4)]:
            sets = subsample_indices(n, q)
            merged = np.concatenate(sets)
            assert sorted(merged.tolist()) == list(range(n))

    def test_too_few(self):
        with pytest.raises(TooFewObservations):
            subsample_indices(3, 3)


class TestKnockoffThreshold:
    def test_example_mixed(self):
        # t=1: (1+1)/2 = 1 > 0.5; t=2: (1+0)/2 = 0.5 <= 0.5
        assert knockoff_threshold([3.0, 2.0, -1.0], 0.5) == 2.0

    def test_example_all_positive(self):
        assert knockoff_threshold([1.0, 2.0, 3.0], 0.5) == 1.0

    def test_zero_vector_infinite(self):
        assert knockoff_threshold(np.zeros(4), 0.5) == math.inf

    def test_oracle_equivalence(self):
        gen = np.random.default_rng(17)
        for _ in range(1000):
            p = int(gen.integers(1, 21))
            w = gen.standard_normal(p)
            tau1 = float(gen.uniform(0.05, 0.95))
            assert knockoff_threshold(w, tau1) == threshold_oracle(w, tau1)

    def test_monotone_in_tau1(self):
        gen = np.random.default_rng(4)
        for _ in range(200):
            w = gen.standard_normal(12)
            t_low = knockoff_threshold(w, 0.2)
            t_high = knockoff_threshold(w, 0.5)
            assert t_high <= t_low

    def test_scale_invariance_of_selection(self):
        gen = np.random.default_rng(9)
        for _ in range(100):
            w = gen.standard_normal(15)
            t1 = knockoff_threshold(w, 0.3)
            t2 = knockoff_threshold(3.7 * w, 0.3)
            sel1 = set(np.nonzero(w >= t1)[0]) if math.isfinite(t1) else set()
            sel2 = set(np.nonzero(3.7 * w >= t2)[0]) if math.isfinite(t2) else set()
            assert sel1 == sel2
            e1 = evalues_single(w, t1)
            e2 = evalues_single(3.7 * w, t2)
            assert np.array_equal(e1, e2)


class TestEvalues:
    def test_example(self):
        e = evalues_single(np.array([3.0, 2.0, -1.0]), 2.0)
        assert np.allclose(e, [3.0, 3.0, 0.0])

    def test_infinite_threshold(self):
        assert np.array_equal(evalues_single(np.array([1.0, -2.0]), math.inf), [0.0, 0.0])

    def test_negative_count_in_denominator(self):
        # #{w <= -3} = 2, so the one selected coordinate gets p/(1+2)
        e = evalues_single(np.array([3.0, -3.0, 1.0, -9.0]), 3.0)
        assert np.allclose(e, [4.0 / 3.0, 0.0, 0.0, 0.0])

    def test_range_invariant(self):
        gen = np.random.default_rng(21)
        for _ in range(200):
            w = gen.standard_normal(10)
            t = knockoff_threshold(w, 0.4)
            e = evalues_single(w, t)
            p = w.size
            nonzero = e[e > 0]
            assert np.all((nonzero >= p / (1 + p) - 1e-12) & (nonzero <= p + 1e-12))

    def test_aggregate_mean(self):
        a = np.array([2.0, 0.0])
        b = np.array([0.0, 2.0])
        assert np.allclose(aggregate_evalues([a, b]), [1.0, 1.0])
        assert np.allclose(aggregate_evalues([a]), a)

    def test_aggregate_mismatch(self):
        with pytest.raises(LengthMismatch):
            aggregate_evalues([np.zeros(3), np.zeros(4)])


class TestEbhSelect:
    def test_example(self):
        selected, k_hat = ebh_select(np.array([3.0, 3.0, 0.0]), 0.5)
        assert selected == frozenset({1, 2})
        assert k_hat == 2

    def test_zero_evalues(self):
        selected, k_hat = ebh_select(np.zeros(6), 0.2)
        assert selected == frozenset()
        assert k_hat == 0

    def test_single_boundary(self):
        p = 5
        e = np.zeros(p)
        e[0] = p / 0.5
        selected, k_hat = ebh_select(e, 0.5)
        assert selected == frozenset({1})
        assert k_hat == 1

    def test_oracle_equivalence(self):
        gen = np.random.default_rng(29)
        for _ in range(1000):
            p = int(gen.integers(1, 25))
            e = np.where(gen.random(p) < 0.4, 0.0, gen.exponential(2.0, p) * p / 4)
            tau_star = float(gen.uniform(0.05, 0.9))
            assert ebh_select(e, tau_star) == ebh_oracle(e, tau_star)

    def test_selection_size_equals_k_hat(self):
        gen = np.random.default_rng(31)
        for _ in range(300):
            e = gen.exponential(3.0, 12)
            selected, k_hat = ebh_select(e, 0.3)
            assert len(selected) == k_hat


class TestFilterParams:
    def test_default_tau1(self):
        assert FilterParams(q=2, tau_star=0.2).effective_tau1() == pytest.approx(0.2 / 3)
        assert FilterParams(q=0, tau_star=0.2).effective_tau1() == pytest.approx(0.2)

    def test_override(self):
        assert FilterParams(q=2, tau1=0.15).effective_tau1() == 0.15

    def test_validation(self):
        with pytest.raises(ValueError):
            FilterParams(q=-1)
        with pytest.raises(ValueError):
            FilterParams(tau_star=1.2)
        with pytest.raises(ValueError):
            FilterParams(statistic="nope")
