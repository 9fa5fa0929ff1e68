import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamridge.errors import DimensionMismatch, InvalidK, InvalidShape
from streamridge.projector import (
    SparseProjectionMatrix,
    build_projection,
    project,
    project_batch,
    sparsification_residual,
    top_k,
    top_k_batch,
)


def elimination_rank(A: np.ndarray, tol: float = 1e-9) -> int:
    """Gaussian elimination with partial pivoting; independent rank oracle."""
    A = np.array(A, dtype=np.float64)
    rows, cols = A.shape
    rank = 0
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        piv = r + int(np.argmax(np.abs(A[r:, c])))
        if abs(A[piv, c]) <= tol:
            continue
        A[[r, piv]] = A[[piv, r]]
        A[r + 1:] -= np.outer(A[r + 1:, c] / A[r, c], A[r])
        r += 1
        rank += 1
    return rank


def hand_matrix():
    """Two rows: {(0, 1.0), (1, 2.0)} and {(0, -1.0), (1, 0.5)}."""
    return SparseProjectionMatrix(
        expanded_dim=2, dim=2, nnz_per_row=2,
        indices=np.array([[0, 1], [0, 1]], dtype=np.int32),
        weights_f32=np.array([[1.0, 2.0], [-1.0, 0.5]], dtype=np.float32),
    )


class TestBuildProjection:
    def test_row_constraint(self):
        W = build_projection(7, m=4, d=3, p=2)
        assert W.indices.shape == (4, 2)
        for row in W.indices:
            assert len(set(row.tolist())) == 2
            assert set(row.tolist()) <= {0, 1, 2}

    def test_deterministic(self):
        a = build_projection(11, 50, 10, 4)
        b = build_projection(11, 50, 10, 4)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.weights_f32, b.weights_f32)

    def test_seed_changes_matrix(self):
        a = build_projection(11, 50, 10, 4)
        b = build_projection(12, 50, 10, 4)
        assert not np.array_equal(a.weights_f32, b.weights_f32)

    def test_full_column_rank_oracle(self):
        W = build_projection(0, 200, 50, 10)
        dense = W.densify()
        assert elimination_rank(dense) == 50
        assert np.linalg.matrix_rank(dense) == 50

    def test_invalid_shapes(self):
        for seed, m, d, p in [(0, 10, 10, 3), (0, 5, 10, 3), (0, 20, 10, 10),
                              (0, 20, 10, 0)]:
            with pytest.raises(InvalidShape):
                build_projection(seed, m, d, p)

    def test_exactly_p_nonzeros_everywhere(self):
        W = build_projection(5, 300, 40, 7)
        dense = W.densify()
        assert ((dense != 0).sum(axis=1) == 7).all()

    def test_weights_standard_normal_stats(self):
        W = build_projection(1, 2000, 100, 50)
        w = W.weights.ravel()
        n = w.size
        assert abs(w.mean()) < 5 / np.sqrt(n)
        assert abs(w.std() - 1) < 5 / np.sqrt(2 * n)

    def test_indices_uniform_without_replacement(self):
        # every column should be picked about m*p/d times
        W = build_projection(3, 4000, 64, 16)
        counts = np.bincount(W.indices.ravel(), minlength=64)
        expect = 4000 * 16 / 64
        sd = np.sqrt(4000 * (16 / 64) * (1 - 16 / 64))
        assert np.all(np.abs(counts - expect) < 6 * sd)


class TestProject:
    def test_zero_vector(self):
        W = build_projection(2, 30, 8, 3)
        assert np.array_equal(project(W, np.zeros(8)), np.zeros(30))

    def test_hand_case(self):
        h = project(hand_matrix(), np.array([2.0, 3.0]))
        assert np.allclose(h, [8.0, -0.5], rtol=0, atol=0)

    def test_matches_dense_oracle_near_full(self):
        W = build_projection(4, 40, 10, 9)
        v = np.random.default_rng(0).standard_normal(10)
        h = project(W, v)
        oracle = W.densify() @ v
        assert np.abs(h - oracle).max() <= 1e-12 * np.abs(oracle).max()

    def test_linearity(self):
        W = build_projection(5, 64, 12, 5)
        r = np.random.default_rng(1)
        u, v = r.standard_normal(12), r.standard_normal(12)
        a, b = 1.7, -0.3
        lhs = project(W, a * u + b * v)
        rhs = a * project(W, u) + b * project(W, v)
        assert np.abs(lhs - rhs).max() < 1e-10

    def test_dimension_mismatch(self):
        W = build_projection(2, 30, 8, 3)
        with pytest.raises(DimensionMismatch):
            project(W, np.zeros(9))

    def test_batch_equals_loop(self):
        W = build_projection(6, 50, 16, 4)
        V = np.random.default_rng(2).standard_normal((64, 16))
        batch = project_batch(W, V)
        for i in range(64):
            assert np.array_equal(batch[i], project(W, V[i]))

    def test_empty_batch(self):
        W = build_projection(6, 50, 16, 4)
        out = project_batch(W, np.empty((0, 16)))
        assert out.shape == (0, 50)


class TestTopK:
    def test_magnitude_ranking(self):
        acts = top_k(np.array([3.0, 1.0, -4.0, 2.0]), 2)
        assert np.array_equal(acts.densify(), [3.0, 0.0, -4.0, 0.0])

    def test_k_equals_m_identity(self):
        h = np.array([0.5, -2.0, 0.0, 1.0])
        acts = top_k(h, 4)
        assert np.array_equal(acts.densify(), h)
        # zero entry is not stored
        assert len(acts.indices) == 3

    def test_tie_break_lowest_index(self):
        acts = top_k(np.array([1.0, 1.0, 1.0]), 2)
        assert acts.indices.tolist() == [0, 1]

    def test_against_stable_sort_oracle(self):
        r = np.random.default_rng(3)
        for _ in range(50):
            h = np.round(r.standard_normal(30), 1)  # rounding forces ties
            k = int(r.integers(1, 30))
            acts = top_k(h, k)
            order = np.lexsort((np.arange(len(h)), -np.abs(h)))
            expect = sorted(i for i in order[:k] if h[i] != 0)
            assert acts.indices.tolist() == expect
            assert np.array_equal(acts.values, h[expect])

    def test_fewer_nonzeros_than_k(self):
        acts = top_k(np.array([0.0, 5.0, 0.0, 0.0]), 3)
        assert acts.indices.tolist() == [1]
        assert acts.values.tolist() == [5.0]

    def test_invalid_k(self):
        with pytest.raises(InvalidK):
            top_k(np.zeros(4), 0)
        with pytest.raises(InvalidK):
            top_k(np.zeros(4), 5)

    def test_idempotent(self):
        r = np.random.default_rng(4)
        h = r.standard_normal(100)
        acts = top_k(h, 17)
        again = top_k(acts.densify(), 17)
        assert np.array_equal(acts.indices, again.indices)
        assert np.array_equal(acts.values, again.values)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=40),
           st.integers(1, 40))
    def test_property_energy_and_count(self, values, k):
        h = np.array(values)
        if k > len(h):
            k = len(h)
        acts = top_k(h, k)
        nnz = int((h != 0).sum())
        assert len(acts.indices) == min(k, nnz)
        assert np.all(np.diff(acts.indices) > 0)
        # kept magnitudes dominate dropped ones
        dropped = np.delete(np.abs(h), acts.indices)
        if len(acts.indices) and len(dropped):
            assert np.abs(acts.values).min() >= dropped.max() - 1e-12

    def test_batch_equals_single(self):
        r = np.random.default_rng(5)
        H = r.standard_normal((20, 50))
        batch = top_k_batch(H, 7)
        for i in range(20):
            single = top_k(H[i], 7)
            row = batch.row(i)
            assert np.array_equal(row.indices, single.indices)
            assert np.array_equal(row.values, single.values)


class TestResidual:
    def test_k_equals_m_zero(self):
        h = np.random.default_rng(6).standard_normal(32)
        assert sparsification_residual(h, 32) == 0.0

    def test_hand_value(self):
        assert sparsification_residual(np.array([3.0, 4.0]), 1) == pytest.approx(9 / 25)

    def test_zero_vector(self):
        assert sparsification_residual(np.zeros(5), 2) == 0.0

    def test_monotone_in_k(self):
        h = np.random.default_rng(7).standard_normal(10000)
        ks = [10, 30, 100, 300, 1000, 3000, 10000]
        residuals = [sparsification_residual(h, k) for k in ks]
        assert all(a >= b - 1e-15 for a, b in zip(residuals, residuals[1:]))


class TestStructuralGuarantees:
    def test_full_rank_over_many_seeds(self):
        ok = sum(
            np.linalg.matrix_rank(build_projection(seed, 200, 50, 10).densify()) == 50
            for seed in range(100))
        assert ok >= 99

    def test_residual_trend_on_projected_gaussians(self):
        # trend check on the energy kept by winner-take-all for expanded
        # Gaussian inputs; the mean residual curve must fall monotonically
        W = build_projection(0, 2000, 64, 16)
        r = np.random.default_rng(8)
        V = r.standard_normal((20, 64))
        H = project_batch(W, V)
        ks = [20, 100, 500, 1000, 1585, 2000]
        curves = []
        for row in H:
            curves.append([sparsification_residual(row, k) for k in ks])
        mean = np.mean(curves, axis=0)
        assert all(a >= b - 1e-12 for a, b in zip(mean, mean[1:]))
        assert mean[-1] == 0.0
