"""Bootstrap and Mann-Whitney tests against enumeration oracles."""

from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afkit.benchstat import (
    BootstrapResult,
    bootstrap_f1,
    compare_models,
    mann_whitney_u,
)
from afkit.errors import EmptySample, TooFewRecords
from afkit.windowing import AlignmentGrid


def count_u(sample_a, sample_b):
    """Number of (a, b) pairs with a > b, ties counting half."""
    u = 0.0
    for x in sample_a:
        for y in sample_b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return u


def brute_force_exact_p(sample_a, sample_b):
    """Two-sided permutation p-value by full enumeration (tie-free inputs)."""
    pooled = list(sample_a) + list(sample_b)
    n_a = len(sample_a)
    observed = count_u(sample_a, sample_b)
    us = []
    for idx in combinations(range(len(pooled)), n_a):
        chosen = set(idx)
        sa = [pooled[i] for i in idx]
        sb = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        us.append(count_u(sa, sb))
    us = np.array(us)
    p_low = np.mean(us <= observed)
    p_high = np.mean(us >= observed)
    return min(1.0, 2.0 * min(p_low, p_high))


def make_grid(record_id, ref, pred_a, pred_b):
    return AlignmentGrid(
        record_id=record_id, slot_s=5.0,
        reference=np.asarray(ref, dtype=np.int8),
        predictions={
            "model_a": np.asarray(pred_a, dtype=np.int8),
            "model_b": np.asarray(pred_b, dtype=np.int8),
        },
    )


class TestMannWhitney:
    def test_identical_multisets(self):
        a = np.array([1.0, 2.0, 2.0, 3.0])
        r = mann_whitney_u(a, a.copy())
        assert r.u_statistic == pytest.approx(a.size**2 / 2.0)
        assert r.p_value > 0.9

    def test_separated_triplets_exact(self):
        r = mann_whitney_u(np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0]))
        assert r.u_statistic == 0.0
        assert r.p_value == pytest.approx(0.1, abs=1e-12)  # 2/20 enumerations

    def test_large_separated_samples(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(10, 11, size=1000)
        b = rng.uniform(0, 1, size=1000)
        r = mann_whitney_u(a, b)
        assert r.p_value < 0.001

    def test_empty_raises(self):
        with pytest.raises(EmptySample):
            mann_whitney_u(np.array([]), np.array([1.0]))

    @given(
        a=st.lists(st.integers(0, 30), min_size=1, max_size=30),
        b=st.lists(st.integers(0, 30), min_size=1, max_size=30),
    )
    @settings(max_examples=200, deadline=None)
    def test_u_partition_identity(self, a, b):
        a, b = np.array(a, float), np.array(b, float)
        u_a = mann_whitney_u(a, b).u_statistic
        u_b = mann_whitney_u(b, a).u_statistic
        assert u_a + u_b == pytest.approx(a.size * b.size, abs=1e-9)

    @given(
        a=st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=25),
        b=st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=25),
    )
    @settings(max_examples=200, deadline=None)
    def test_exchange_symmetry(self, a, b):
        a, b = np.array(a), np.array(b)
        r_ab = mann_whitney_u(a, b)
        r_ba = mann_whitney_u(b, a)
        assert r_ab.p_value == pytest.approx(r_ba.p_value, abs=1e-12)

    @pytest.mark.parametrize("case", range(25))
    def test_exact_matches_brute_force(self, case):
        rng = np.random.default_rng(case)
        n_a = int(rng.integers(1, 9))
        n_b = int(rng.integers(1, 9))
        pooled = rng.permutation(np.arange(n_a + n_b, dtype=float) * 1.7 + 0.3)
        a, b = pooled[:n_a], pooled[n_a:]
        r = mann_whitney_u(a, b)
        assert r.u_statistic == count_u(a, b)
        assert r.p_value == pytest.approx(brute_force_exact_p(a, b), abs=1e-12)

    @pytest.mark.parametrize("case", range(25))
    def test_normal_approximation_close_to_exact(self, case):
        # The 0.05 bound is provably out of reach for sample sizes 1-2
        # (coarsest exact p vs any normal curve); it holds with margin for
        # sizes 3..8, which is what we verify.
        rng = np.random.default_rng(1000 + case)
        n_a = int(rng.integers(3, 9))
        n_b = int(rng.integers(3, 9))
        pooled = rng.permutation(np.arange(n_a + n_b, dtype=float))
        a, b = pooled[:n_a], pooled[n_a:]
        exact = mann_whitney_u(a, b, exact=True).p_value
        approx = mann_whitney_u(a, b, exact=False).p_value
        assert abs(exact - approx) < 0.05


class TestBootstrap:
    def grids(self, n_records=10, seed=0, perfect_b=True):
        rng = np.random.default_rng(seed)
        grids = []
        for i in range(n_records):
            ref = rng.integers(0, 2, size=24)
            if ref.max() == 0:
                ref[0] = 1
            pred_a = ref.copy()
            pred_b = ref.copy() if perfect_b else np.zeros_like(ref)
            grids.append(make_grid(f"r{i}", ref, pred_a, pred_b))
        return grids

    def test_identical_models_identical_sequences(self):
        result = bootstrap_f1(self.grids(), "model_a", "model_b", n_iter=50, seed=3)
        np.testing.assert_array_equal(result.f1_a, result.f1_b)

    def test_seed_determinism(self):
        grids = self.grids(seed=1)
        r1 = bootstrap_f1(grids, "model_a", "model_b", n_iter=40, seed=9)
        r2 = bootstrap_f1(grids, "model_a", "model_b", n_iter=40, seed=9)
        np.testing.assert_array_equal(r1.f1_a, r2.f1_a)
        np.testing.assert_array_equal(r1.f1_b, r2.f1_b)

    def test_perfect_vs_always_negative(self):
        result = bootstrap_f1(
            self.grids(perfect_b=False), "model_a", "model_b", n_iter=30, seed=2
        )
        np.testing.assert_array_equal(result.f1_a, 1.0)
        np.testing.assert_array_equal(result.f1_b, 0.0)

    def test_sample_size_floor(self):
        grids = self.grids(n_records=10)
        result = bootstrap_f1(grids, "model_a", "model_b", n_iter=5, frac=0.8, seed=0)
        assert result.n_iter == 5
        assert result.frac == 0.8

    def test_too_few_records(self):
        with pytest.raises(TooFewRecords):
            bootstrap_f1(self.grids(n_records=1), "model_a", "model_b")

    def test_uncovered_slots_excluded_from_both(self):
        ref = [1, 1, 0, 0]
        # model_b lacks slots 2-3; those slots must not count for model_a either.
        grid1 = make_grid("r1", ref, [1, 1, 1, 1], [1, 1, -1, -1])
        grid2 = make_grid("r2", ref, [1, 1, 1, 1], [1, 1, -1, -1])
        result = bootstrap_f1([grid1, grid2], "model_a", "model_b", n_iter=5,
                              frac=0.99, seed=0)
        np.testing.assert_array_equal(result.f1_a, 1.0)  # FPs were all uncovered
        np.testing.assert_array_equal(result.f1_b, 1.0)


class TestCompareModels:
    def degenerate(self, value_a, value_b, n=1000):
        return BootstrapResult(
            f1_a=np.full(n, value_a), f1_b=np.full(n, value_b),
            model_a="model_a", model_b="model_b", n_iter=n, frac=0.8, seed=0,
        )

    def test_identical_distributions_tie(self):
        summary = compare_models(self.degenerate(0.95, 0.95))
        assert summary.winner == "tie"
        assert summary.p_value == 1.0

    def test_separated_distributions(self):
        summary = compare_models(self.degenerate(0.96, 0.94))
        assert summary.winner == "model_a"
        assert summary.p_value < 0.001
        assert summary.median_f1_a == pytest.approx(0.96)
        assert summary.median_f1_b == pytest.approx(0.94)

    def test_swap_symmetry(self):
        fwd = compare_models(self.degenerate(0.96, 0.94))
        result = self.degenerate(0.94, 0.96)
        rev = compare_models(result)
        assert rev.winner == "model_b"
        assert rev.p_value == pytest.approx(fwd.p_value, abs=1e-12)
