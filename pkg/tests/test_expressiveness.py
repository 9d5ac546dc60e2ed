import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pixelflykit.errors import InfeasibleError, PixelflyError
from pixelflykit.expressiveness import (
    ClusterProcess,
    attention_matrix,
    best_approximations,
    generate_clustered,
    keep_largest_error,
    lowrank_error,
    run_experiment,
    support_lowrank_error,
)
from pixelflykit.patterns import FlatButterflyParams, flat_butterfly_mask


class TestProcess:
    def test_validation(self):
        with pytest.raises(PixelflyError):
            ClusterProcess(10, 3, 3, 4)
        with pytest.raises(PixelflyError):
            ClusterProcess(8, 2, 4, 4, delta=-1)
        with pytest.raises(PixelflyError):
            ClusterProcess(8, 2, 4, 4, beta=0.0)

    def test_default_beta(self):
        assert ClusterProcess(64, 8, 8, 4).beta == pytest.approx(np.log(64))

    def test_zero_offset_repeats_centres(self):
        Q = generate_clustered(ClusterProcess(12, 3, 4, 5, delta=0.0, seed=2))
        for c in range(3):
            np.testing.assert_array_equal(Q[4 * c : 4 * c + 4], np.tile(Q[4 * c], (4, 1)))

    def test_single_cluster(self):
        Q = generate_clustered(ClusterProcess(6, 1, 6, 3, delta=0.0))
        assert np.unique(Q, axis=0).shape[0] == 1

    def test_deterministic(self):
        proc = ClusterProcess(16, 4, 4, 8, seed=7)
        np.testing.assert_array_equal(generate_clustered(proc), generate_clustered(proc))

    def test_row_norm_moment(self):
        delta, d = 0.5, 16
        sq = np.concatenate(
            [(generate_clustered(ClusterProcess(256, 32, 8, d, delta, seed=s)) ** 2).sum(axis=1) for s in range(20)]
        )
        # rows share centres within a cluster, so use cluster-level spread for the error bar
        means = sq.reshape(-1, 8).mean(axis=1)
        se = means.std(ddof=1) / np.sqrt(means.size)
        assert abs(sq.mean() - (1 + delta**2)) <= 3 * se


class TestAttention:
    def test_beta_zero_gives_ones(self, rng):
        np.testing.assert_array_equal(attention_matrix(rng.standard_normal((5, 3)), 0.0), np.ones((5, 5)))

    def test_symmetric(self, rng):
        A = attention_matrix(rng.standard_normal((7, 4)), 1.3)
        np.testing.assert_array_equal(A, A.T)

    def test_hand_example(self):
        A = attention_matrix([[1.0, 0.0], [1.0, 1.0]], 2.0)
        np.testing.assert_allclose(A, np.exp([[2.0, 2.0], [2.0, 4.0]]), rtol=1e-15)

    def test_overflow_guard(self):
        with pytest.raises(PixelflyError):
            attention_matrix([[10.0]], 8.0)


class TestErrors:
    def test_lowrank_full_rank_is_exact(self, rng):
        M = rng.standard_normal((6, 6))
        assert lowrank_error(M, 6) == 0.0
        assert lowrank_error(M, 0) == pytest.approx(np.linalg.norm(M))
        with pytest.raises(PixelflyError):
            lowrank_error(M, -1)

    def test_keep_largest(self):
        M = np.array([[3.0, -4.0], [1.0, 0.0]])
        assert keep_largest_error(M, 2) == 1.0
        assert keep_largest_error(M, 0) == pytest.approx(np.sqrt(26))
        assert keep_largest_error(M, 10) == 0.0

    def test_block_diagonal_has_zero_slr_error(self, rng):
        n, block = 16, 4
        support = flat_butterfly_mask(FlatButterflyParams(n // block, block, 2)).to_dense()
        M = np.where(support, rng.standard_normal((n, n)), 0.0)
        assert support_lowrank_error(M, support, 0) == 0.0
        assert best_approximations(M, block, 0).slr == 0.0

    @given(st.integers(0, 2**31))
    def test_monotone_and_support_bound(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((8, 8))
        errs = [lowrank_error(M, r) for r in range(9)]
        assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))
        kept = [keep_largest_error(M, c) for c in range(0, 65, 8)]
        assert all(a >= b for a, b in zip(kept, kept[1:]))
        support = flat_butterfly_mask(FlatButterflyParams(4, 2, 2)).to_dense()
        alone = np.linalg.norm(np.where(support, 0.0, M))
        for r in range(4):
            assert support_lowrank_error(M, support, r) <= alone + 1e-12


class TestBestApproximations:
    def test_budget_accounting(self, rng):
        res = best_approximations(rng.standard_normal((32, 32)), 4, 2)
        assert res.sparse_count == 32 * 2 * 4
        assert res.budget == res.sparse_count + 2 * 32 * 2
        assert res.lowrank_rank == res.budget // 64

    def test_rejects_bad_shapes(self, rng):
        with pytest.raises(PixelflyError):
            best_approximations(rng.standard_normal((12, 12)), 4, 1)
        with pytest.raises(PixelflyError):
            best_approximations(rng.standard_normal((8, 4)), 2, 1)
        with pytest.raises(InfeasibleError):
            best_approximations(rng.standard_normal((8, 8)), 2, 9)

    def test_slr_wins_on_clustered_attention(self):
        rows, results = run_experiment(n=128, C=16, b=8, d=32, seeds=range(3), rank=8)
        assert len(rows) == 3 and all(r.slr_wins for r in results)
        assert rows[0][:4] == (0, 128, 16, 8)
