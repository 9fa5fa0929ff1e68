import numpy as np
import pytest
import scipy.linalg as sla

from streamridge.embed_store import TaskBatch
from streamridge.errors import (
    DegenerateInput,
    DimensionMismatch,
    NotPositiveDefinite,
    Unsolved,
)
from streamridge.projector import build_projection, top_k_batch
from streamridge.ridge import (
    gcv_select,
    load_checkpoint,
    map_labels,
    new_state,
    one_hot,
    predict,
    predict_batch,
    save_checkpoint,
    solve_prototypes,
    solve_prototypes_lu,
    train_online,
    train_task,
    update_stats,
)


def hat_matrix_gcv(H, Y, lam):
    """Independent oracle: GCV from the explicit ridge hat matrix."""
    n, m = H.shape
    inv = np.linalg.inv(H.T @ H + lam * np.eye(m))
    hat = H @ inv @ H.T
    df = float(np.trace(hat))
    Yhat = hat @ Y
    rss = float(((Y - Yhat) ** 2).sum())
    return df, rss / (n * (1 - df / n) ** 2), Yhat


class TestUpdateStats:
    def test_fresh_state_equals_gram(self, rng):
        H = rng.standard_normal((12, 20))
        labels = rng.integers(0, 3, 12)
        state = update_stats(new_state(20), H, labels)
        assert np.array_equal(state.G, H.T @ H)
        assert np.array_equal(state.S, H.T @ one_hot(labels, 3))

    def test_two_updates_equal_concatenated(self, rng):
        H1 = rng.standard_normal((9, 16))
        H2 = rng.standard_normal((14, 16))
        l1 = rng.integers(0, 2, 9)
        l2 = rng.integers(0, 4, 14)
        stream = update_stats(update_stats(new_state(16), H1, l1), H2, l2)
        batch = update_stats(new_state(16), np.vstack([H1, H2]),
                             np.concatenate([l1, l2]))
        assert np.abs(stream.G - batch.G).max() < 1e-9
        assert np.abs(stream.S - batch.S).max() < 1e-9

    def test_zero_rows_change_nothing(self, rng):
        H = rng.standard_normal((6, 10))
        labels = rng.integers(0, 2, 6)
        base = update_stats(new_state(10), H, labels)
        padded = update_stats(update_stats(new_state(10), H, labels),
                              np.zeros((3, 10)), np.zeros(3, dtype=int))
        assert np.array_equal(base.G, padded.G)
        assert np.array_equal(base.S, padded.S)

    def test_column_growth_zero_pads(self, rng):
        H = rng.standard_normal((5, 8))
        state = update_stats(new_state(8), H, np.zeros(5, dtype=int))
        assert state.S.shape == (8, 1)
        state = update_stats(state, np.zeros((1, 8)), np.array([4]))
        assert state.S.shape == (8, 5)
        assert np.array_equal(state.S[:, 1:], np.zeros((8, 4)))

    def test_marks_stale(self, rng):
        H = rng.standard_normal((6, 8))
        state = update_stats(new_state(8), H, np.zeros(6, dtype=int))
        solve_prototypes(state, 1.0)
        assert state.C is not None
        update_stats(state, H, np.zeros(6, dtype=int))
        assert state.C is None

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            update_stats(new_state(8), rng.standard_normal((5, 9)), np.zeros(5, int))

    def test_symmetry_and_psd(self, rng):
        state = new_state(24)
        for _ in range(4):
            update_stats(state, rng.standard_normal((10, 24)),
                         rng.integers(0, 3, 10))
        assert np.abs(state.G - state.G.T).max() < 1e-9
        probes = rng.standard_normal((24, 30))
        rayleigh = np.einsum("ij,ik,kj->j", probes, state.G, probes)
        assert rayleigh.min() > -1e-9


class TestGcv:
    def test_matches_hat_matrix_oracle(self, rng):
        # 20 instances at n=40, m=120, 13 grid points
        grid = np.logspace(-2, 2, 13)
        for trial in range(20):
            r = np.random.default_rng(trial)
            H = r.standard_normal((40, 120))
            labels = r.integers(0, 5, 40)
            Y = one_hot(labels, 5)
            report = gcv_select(H, labels, 5, grid)
            oracle_gcv = np.empty(len(grid))
            for i, lam in enumerate(grid):
                df, g, yhat = hat_matrix_gcv(H, Y, lam)
                oracle_gcv[i] = g
                assert abs(report.df[i] - df) < 1e-8 * max(df, 1)
                assert abs(report.gcv[i] - g) <= 1e-8 * g
            best = len(grid) - 1 - int(np.argmin(oracle_gcv[::-1]))
            assert report.lambda_star == grid[best]

    def test_large_lambda_limit(self, rng):
        H = rng.standard_normal((10, 30))
        labels = rng.integers(0, 3, 10)
        Y = one_hot(labels, 3)
        report = gcv_select(H, labels, 3, np.array([1e14]))
        assert report.df[0] < 1e-4
        assert np.isclose(report.gcv[0], (Y ** 2).sum() / 10, rtol=1e-3)

    def test_df_strictly_decreasing(self, rng):
        H = rng.standard_normal((15, 40))
        grid = np.logspace(-3, 3, 9)
        report = gcv_select(H, rng.integers(0, 2, 15), 2, grid)
        assert np.all(np.diff(report.df) < 0)
        assert report.df[0] <= min(15, 40)
        assert report.df[-1] > 0

    def test_tie_goes_to_larger_lambda(self):
        # H = 0 makes every candidate equivalent
        H = np.zeros((4, 6))
        labels = np.array([0, 1, 0, 1])
        report = gcv_select(H, labels, 2, np.array([0.1, 1.0, 10.0]))
        assert report.lambda_star == 10.0

    def test_singleton_grid(self, rng):
        H = rng.standard_normal((8, 12))
        report = gcv_select(H, rng.integers(0, 2, 8), 2, np.array([3.5]))
        assert report.lambda_star == 3.5

    def test_needs_two_samples(self, rng):
        with pytest.raises(DegenerateInput):
            gcv_select(rng.standard_normal((1, 5)), np.zeros(1, int), 1,
                       np.array([1.0]))

    def test_rejects_bad_grid(self, rng):
        H = rng.standard_normal((6, 5))
        labels = np.zeros(6, int)
        for grid in ([], [0.0, 1.0], [2.0, 1.0], [1.0, 1.0]):
            with pytest.raises(DegenerateInput):
                gcv_select(H, labels, 1, np.array(grid))


class TestSolve:
    def test_zero_gram_identity(self):
        state = new_state(6)
        state.S = np.eye(6)[:, :3].copy()
        solve_prototypes(state, 1.0)
        assert np.allclose(state.C, state.S)

    def test_identity_gram_halves(self):
        state = new_state(5)
        state.G = np.eye(5)
        state.S = np.ones((5, 2))
        solve_prototypes(state, 1.0)
        assert np.allclose(state.C, 0.5)

    def test_matches_lu_oracle_20_systems(self):
        for trial in range(20):
            r = np.random.default_rng(100 + trial)
            A = r.standard_normal((60, 100))
            state = new_state(100)
            state.G = A.T @ A
            state.S = r.standard_normal((100, 4))
            lam = float(10.0 ** r.uniform(-2, 2))
            solve_prototypes(state, lam)
            oracle = sla.lu_solve(sla.lu_factor(state.G + lam * np.eye(100)), state.S)
            scale = np.abs(oracle).max()
            assert np.abs(state.C - oracle).max() < 1e-8 * scale
            # residual bound
            resid = np.linalg.norm((state.G + lam * np.eye(100)) @ state.C - state.S)
            assert resid / np.linalg.norm(state.S) < 1e-6

    def test_lu_variant_matches_cholesky(self, rng):
        A = rng.standard_normal((30, 50))
        state = new_state(50)
        state.G = A.T @ A
        state.S = rng.standard_normal((50, 3))
        solve_prototypes(state, 0.7)
        c_chol = state.C.copy()
        solve_prototypes_lu(state, 0.7)
        assert np.abs(state.C - c_chol).max() < 1e-8 * np.abs(c_chol).max()

    def test_not_positive_definite_surfaced(self):
        state = new_state(4)
        state.G = -np.eye(4)  # numerically broken accumulator
        state.S = np.ones((4, 1))
        with pytest.raises(NotPositiveDefinite):
            solve_prototypes(state, 1e-6)

    def test_lambda_recorded(self, rng):
        state = new_state(3)
        state.S = np.ones((3, 1))
        solve_prototypes(state, 2.0)
        solve_prototypes(state, 4.0)
        assert state.lambda_history == [2.0, 4.0]


def make_batch(rng, d, classes, n, task_index=0, cumulative=None):
    feats = rng.standard_normal((n, d))
    labels = rng.choice(classes, size=n)
    labels[: len(classes)] = classes  # every class appears
    return TaskBatch(feats, labels.astype(np.int64), task_index,
                     cumulative or len(classes))


class TestTrainPredict:
    def setup_method(self):
        self.W = build_projection(0, 200, 24, 6)
        self.grid = np.logspace(-1, 3, 9)

    def test_train_task_runs_and_times(self, rng):
        state = new_state(200)
        batch = make_batch(rng, 24, np.array([0, 1, 2]), 30)
        state, report, timings = train_task(state, self.W, batch, self.grid, 50)
        assert state.C is not None
        assert state.classes_seen == 3
        assert report.lambda_star in self.grid
        assert timings.total > 0
        assert state.lambda_history == [report.lambda_star]

    def test_singleton_grid_selected(self, rng):
        state = new_state(200)
        batch = make_batch(rng, 24, np.array([0, 1]), 20)
        _, report, _ = train_task(state, self.W, batch, np.array([7.0]), 50)
        assert report.lambda_star == 7.0

    def test_identical_distributions_similar_lambda(self):
        r1 = np.random.default_rng(11)
        r2 = np.random.default_rng(22)
        state = new_state(200)
        b1 = make_batch(r1, 24, np.array([0, 1]), 200)
        b2 = make_batch(r2, 24, np.array([2, 3]), 200)
        state, rep1, _ = train_task(state, self.W, b1, self.grid, 50)
        state, rep2, _ = train_task(state, self.W, b2, self.grid, 50)
        i1 = int(np.nonzero(self.grid == rep1.lambda_star)[0][0])
        i2 = int(np.nonzero(self.grid == rep2.lambda_star)[0][0])
        assert abs(i1 - i2) <= 1

    def test_predict_requires_solve(self, rng):
        state = new_state(200)
        with pytest.raises(Unsolved):
            predict(state, self.W, np.zeros(24), 50)

    def test_predict_single_column_always_that_class(self, rng):
        state = new_state(200)
        batch = make_batch(rng, 24, np.array([5]), 8)
        # single class: gcv needs >= 2 samples, fixed lambda via singleton grid
        train_task(state, self.W, batch, np.array([1.0]), 50)
        v = rng.standard_normal(24)
        assert predict(state, self.W, v, 50) == 5

    def test_sparse_scores_equal_dense(self, rng):
        state = new_state(200)
        batch = make_batch(rng, 24, np.array([0, 1, 2, 3]), 60)
        train_task(state, self.W, batch, self.grid, 50)
        V = rng.standard_normal((25, 24))
        H = np.vstack([self.W.densify() @ v for v in V])
        acts = top_k_batch(H, 50)
        dense_scores = acts.to_dense() @ state.C
        from streamridge.kernels import activation_scores
        sparse_scores = activation_scores(acts, state.C)
        assert np.abs(sparse_scores - dense_scores).max() \
            < 1e-10 * np.abs(dense_scores).max()
        ids = np.asarray(state.class_ids)
        assert np.array_equal(predict_batch(state, self.W, V, 50),
                              ids[np.argmax(dense_scores, axis=1)])

    def test_duplicate_columns_tie_to_lowest(self, rng):
        state = new_state(200)
        batch = make_batch(rng, 24, np.array([0, 1]), 20)
        train_task(state, self.W, batch, np.array([1.0]), 50)
        state.C[:, 1] = state.C[:, 0]  # force exact tie
        v = rng.standard_normal(24)
        assert predict(state, self.W, v, 50) == state.class_ids[0]

    def test_predict_batch_equals_loop_and_empty(self, rng):
        state = new_state(200)
        batch = make_batch(rng, 24, np.array([0, 1, 2]), 30)
        train_task(state, self.W, batch, self.grid, 50)
        V = rng.standard_normal((10, 24))
        batch_preds = predict_batch(state, self.W, V, 50)
        loop_preds = [predict(state, self.W, v, 50) for v in V]
        assert batch_preds.tolist() == loop_preds
        assert predict_batch(state, self.W, np.empty((0, 24)), 50).size == 0

    def test_class_ids_follow_first_appearance(self, rng):
        state = new_state(8)
        cols = map_labels(state, np.array([7, 3, 7, 9]))
        assert state.class_ids == [7, 3, 9]
        assert cols.tolist() == [0, 1, 0, 2]


class TestStreamingEqualsBatch:
    def test_online_matches_task_mode(self, rng):
        # ten streamed batches against one concatenated update
        W = build_projection(1, 150, 20, 5)
        feats = rng.standard_normal((90, 20))
        labels = rng.integers(0, 4, 90)
        batches = [TaskBatch(feats[i:i + 9], labels[i:i + 9], i // 9, 4)
                   for i in range(0, 90, 9)]

        online = new_state(150)
        train_online(online, W, batches, np.array([5.0]), 40, solve_every=1)

        task = new_state(150)
        train_task(task, W, TaskBatch(feats, labels, 0, 4), np.array([5.0]), 40)

        assert np.abs(online.G - task.G).max() < 1e-9
        assert np.abs(online.S - task.S).max() < 1e-9
        assert np.abs(online.C - task.C).max() < 1e-9

    def test_single_batch_stream_equals_task(self, rng):
        W = build_projection(2, 100, 16, 4)
        batch = make_batch(rng, 16, np.array([0, 1]), 25)
        online = train_online(new_state(100), W, [batch], np.logspace(0, 2, 5), 30)
        task, _, _ = train_task(new_state(100), W, batch, np.logspace(0, 2, 5), 30)
        assert np.array_equal(online.G, task.G)
        assert np.array_equal(online.C, task.C)

    def test_solve_every_still_solves_tail(self, rng):
        W = build_projection(3, 100, 16, 4)
        batches = [make_batch(rng, 16, np.array([0, 1]), 20) for _ in range(3)]
        state = train_online(new_state(100), W, batches, np.array([2.0]), 30,
                             solve_every=2)
        assert state.C is not None
        # final C reflects all data
        full = new_state(100)
        for b in batches:
            H = top_k_batch(np.vstack([W.densify() @ f for f in b.features]), 30)
            update_stats(full, H.to_dense(), map_labels(full, b.labels),
                         num_classes=full.classes_seen)
        solve_prototypes(full, 2.0)
        assert np.abs(state.C - full.C).max() < 1e-9

    def test_permutation_invariance_of_outputs(self, rng):
        W = build_projection(4, 120, 18, 5)
        batch = make_batch(rng, 18, np.array([0, 1, 2]), 40)
        perm = rng.permutation(40)
        shuffled = TaskBatch(batch.features[perm], batch.labels[perm], 0, 3)
        grid = np.logspace(-1, 2, 7)
        s1 = new_state(120)
        s2 = new_state(120)
        _, rep1, _ = train_task(s1, W, batch, grid, 30)
        _, rep2, _ = train_task(s2, W, shuffled, grid, 30)
        assert np.abs(s1.G - s2.G).max() < 1e-9
        assert rep1.lambda_star == rep2.lambda_star
        assert np.abs(rep1.df - rep2.df).max() < 1e-6
        # column order can differ when label first-appearance differs; compare
        # per class
        for cls in (0, 1, 2):
            c1 = s1.C[:, s1.class_ids.index(cls)]
            c2 = s2.C[:, s2.class_ids.index(cls)]
            assert np.abs(c1 - c2).max() < 1e-9


class TestCheckpoint:
    def test_round_trip(self, rng, tmp_path):
        W = build_projection(5, 80, 12, 3)
        state = new_state(80)
        batch = make_batch(rng, 12, np.array([4, 2]), 16)
        train_task(state, W, batch, np.array([1.5]), 20)
        path = tmp_path / "state.flys"
        save_checkpoint(state, path, seed=5, d=12, p=3, k=20)
        back, params = load_checkpoint(path)
        assert params == {"seed": 5, "d": 12, "p": 3, "k": 20}
        assert np.array_equal(back.G, state.G)
        assert np.array_equal(back.S, state.S)
        assert np.array_equal(back.C, state.C)
        assert back.lambda_history == state.lambda_history
        assert back.class_ids == state.class_ids
        assert back.tasks_seen == state.tasks_seen

    def test_resume_continues_identically(self, rng, tmp_path):
        W = build_projection(6, 80, 12, 3)
        b1 = make_batch(rng, 12, np.array([0, 1]), 14)
        b2 = make_batch(rng, 12, np.array([2, 3]), 14)
        grid = np.logspace(0, 2, 5)

        straight = new_state(80)
        train_task(straight, W, b1, grid, 20)
        save_checkpoint(straight, tmp_path / "mid.flys", seed=6, d=12, p=3, k=20)
        train_task(straight, W, b2, grid, 20)

        resumed, _ = load_checkpoint(tmp_path / "mid.flys")
        train_task(resumed, W, b2, grid, 20)
        assert np.array_equal(straight.C, resumed.C)
        assert straight.class_ids == resumed.class_ids
