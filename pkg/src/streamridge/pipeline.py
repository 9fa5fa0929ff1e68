"""End-to-end incremental training pipelines and the experiment runner.

The optimized pipeline is sparse expansion -> winner-take-all -> streaming
ridge with per-task GCV.  Vanilla component swaps (dense projection matrix,
explicit k-fold cross-validation, LU solve, dense similarity scoring) exist
for ablation and component benchmarking; with the penalty held fixed every
swap preserves predictions and only changes cost.
"""

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from . import kernels, ridge
from .analysis import RunReport, prototype_correlations, stage_accuracy, timing_split
from .baseline import PrototypeBank, accumulate_prototypes, cosine_predict_batch
from .embed_store import (
    EmbeddingDataset,
    TaskBatch,
    TaskManifest,
    holdout_split,
    load_manifest,
    make_manifest,
    read_embedding_file,
    split_tasks,
)
from .errors import ConfigError
from .projector import build_projection, project_batch, top_k_batch
from .synthgen import SynthSpec, generate

# Penalty grids: 4 points per decade.  High-multicollinearity transformer
# embeddings want the narrow high range; everything else defaults to the wide
# range.  Both are overridable per run.
GRID_TRANSFORMER = (1e6, 1e9, 13)
GRID_GENERAL = (1e4, 1e9, 21)


def lambda_grid(lo: float, hi: float, points: int) -> np.ndarray:
    if lo <= 0 or hi <= lo:
        raise ConfigError("lambda-min/lambda-max", f"need 0 < min < max, got [{lo}, {hi}]")
    if points < 1:
        raise ConfigError("lambda-points", f"need at least one point, got {points}")
    if points == 1:
        return np.array([lo])
    return np.logspace(np.log10(lo), np.log10(hi), points)


@dataclass
class PipelineFlags:
    """Vanilla component swaps; any subset may be active."""

    dense_projection: bool = False
    explicit_cv: bool = False
    lu_solve: bool = False
    dense_similarity: bool = False


@dataclass
class AblationFlags:
    no_projection: bool = False  # ridge directly on the raw features
    no_ridge: bool = False       # cosine prototype matching on expanded features


def explicit_cv_select(H: np.ndarray, labels: np.ndarray, num_classes: int,
                       grid: np.ndarray, folds: int = 5, use_lu: bool = True,
                       progress=None):
    """Explicit k-fold cross-validation over the penalty grid.

    Fold assignment is round-robin by row order.  Every (fold, candidate)
    pair performs a full regularized solve on the fold's Gram matrix; the
    score is validation mean squared error against the one-hot targets.
    Ties pick the larger penalty.  Returns (lambda_star, mse_per_candidate).
    """
    H = np.asarray(H, dtype=np.float64)
    n, m = H.shape
    grid = np.asarray(grid, dtype=np.float64)
    Y = ridge.one_hot(labels, num_classes)
    fold_of = np.arange(n) % folds
    sse = np.zeros(len(grid))
    eye = np.eye(m)
    for f in range(folds):
        val = fold_of == f
        Hf, Yf = H[~val], Y[~val]
        Hv, Yv = H[val], Y[val]
        if len(Hf) == 0 or len(Hv) == 0:
            continue
        Gf = Hf.T @ Hf
        Sf = Hf.T @ Yf
        for i, lam in enumerate(grid):
            A = Gf + lam * eye
            if use_lu:
                C = sla.lu_solve(sla.lu_factor(A, overwrite_a=True, check_finite=False),
                                 Sf, check_finite=False)
            else:
                C = sla.cho_solve(sla.cho_factor(A, lower=True, overwrite_a=True,
                                                 check_finite=False),
                                  Sf, check_finite=False)
            sse[i] += float(((Yv - Hv @ C) ** 2).sum())
            if progress is not None:
                progress(f, i)
        del Gf, Sf
    mse = sse / n
    best = len(mse) - 1 - int(np.argmin(mse[::-1]))
    return float(grid[best]), mse


class NcmPipeline:
    """Cosine prototype matching on the raw features."""

    name = "ncm"

    def __init__(self, dim: int):
        self.bank = PrototypeBank(dim)

    def train_task(self, batch: TaskBatch) -> ridge.StageTimings:
        t0 = time.perf_counter()
        accumulate_prototypes(self.bank, batch.features, batch.labels)
        return ridge.StageTimings(stats=time.perf_counter() - t0)

    def train_task_online(self, chunks, solve_every: int = 1) -> ridge.StageTimings:
        t0 = time.perf_counter()
        for chunk in chunks:
            accumulate_prototypes(self.bank, chunk.features, chunk.labels)
        return ridge.StageTimings(stats=time.perf_counter() - t0)

    def predict_batch(self, V: np.ndarray) -> np.ndarray:
        return cosine_predict_batch(self.bank, V)

    @property
    def lambda_history(self):
        return []


class FlyPipeline:
    """Expansion + winner-take-all + streaming ridge, with optional vanilla
    component swaps and ablation switches."""

    def __init__(self, dim: int, m: int, p: int, k: int, grid: np.ndarray,
                 seed: int, flags: PipelineFlags | None = None,
                 ablation: AblationFlags | None = None,
                 fixed_lambda: float | None = None,
                 track_correlations: bool = False):
        self.flags = flags or PipelineFlags()
        self.ablation = ablation or AblationFlags()
        self.k = k
        self.grid = np.asarray(grid, dtype=np.float64)
        self.fixed_lambda = fixed_lambda
        self.track_correlations = track_correlations
        if self.ablation.no_projection:
            self.W = self.dense_W = None
            work_dim = dim
        else:
            self.W = build_projection(seed, m, dim, p)
            self.dense_W = self.W.densify() if self.flags.dense_projection else None
            work_dim = m
        self.work_dim = work_dim
        if self.ablation.no_ridge:
            self.bank = PrototypeBank(work_dim)
            self.state = None
        else:
            self.state = ridge.new_state(work_dim)
            self.bank = None
        self.raw_bank = PrototypeBank(dim) if track_correlations else None
        self.proj_bank = PrototypeBank(work_dim) if track_correlations else None

    @property
    def name(self) -> str:
        return "fly"

    @property
    def lambda_history(self):
        return [] if self.state is None else self.state.lambda_history

    def _expand(self, V: np.ndarray):
        """(activations, dense work-space features) after the expansion stage."""
        if self.ablation.no_projection:
            return None, np.asarray(V, dtype=np.float64)
        if self.flags.dense_projection:
            H = np.asarray(V, dtype=np.float64) @ self.dense_W.T
        else:
            H = project_batch(self.W, V)
        acts = top_k_batch(H, self.k)
        return acts, acts.to_dense()

    def _select_lambda(self, Hk, cols):
        if self.fixed_lambda is not None:
            return float(self.fixed_lambda)
        if self.flags.explicit_cv:
            lam, _ = explicit_cv_select(Hk, cols, self.state.classes_seen, self.grid,
                                        use_lu=self.flags.lu_solve)
            return lam
        report = ridge.gcv_select(Hk, cols, self.state.classes_seen, self.grid)
        return report.lambda_star

    def _solve(self, lam: float):
        if self.flags.lu_solve:
            ridge.solve_prototypes_lu(self.state, lam)
        else:
            ridge.solve_prototypes(self.state, lam)

    def _track(self, batch: TaskBatch, Hk: np.ndarray):
        if self.raw_bank is not None:
            accumulate_prototypes(self.raw_bank, batch.features, batch.labels)
        if self.proj_bank is not None:
            accumulate_prototypes(self.proj_bank, Hk, batch.labels)

    def train_task(self, batch: TaskBatch) -> ridge.StageTimings:
        t0 = time.perf_counter()
        acts, Hk = self._expand(batch.features)
        t1 = time.perf_counter()
        self._track(batch, Hk)
        if self.ablation.no_ridge:
            accumulate_prototypes(self.bank, Hk, batch.labels)
            return ridge.StageTimings(projection=t1 - t0,
                                      stats=time.perf_counter() - t1)
        cols = ridge.map_labels(self.state, batch.labels)
        ridge.update_stats(self.state, Hk, cols, num_classes=self.state.classes_seen)
        t2 = time.perf_counter()
        lam = self._select_lambda(Hk, cols)
        t3 = time.perf_counter()
        self._solve(lam)
        t4 = time.perf_counter()
        self.state.tasks_seen += 1
        return ridge.StageTimings(projection=t1 - t0, stats=t2 - t1,
                                  selection=t3 - t2, solve=t4 - t3)

    def train_task_online(self, chunks, solve_every: int = 1) -> ridge.StageTimings:
        """Per-batch mode: statistics update every chunk, prototype re-solve
        every ``solve_every`` chunks with the penalty chosen on that chunk."""
        total = ridge.StageTimings()
        pending = None
        for b, chunk in enumerate(chunks):
            t0 = time.perf_counter()
            acts, Hk = self._expand(chunk.features)
            t1 = time.perf_counter()
            self._track(chunk, Hk)
            total.projection += t1 - t0
            if self.ablation.no_ridge:
                accumulate_prototypes(self.bank, Hk, chunk.labels)
                total.stats += time.perf_counter() - t1
                continue
            cols = ridge.map_labels(self.state, chunk.labels)
            ridge.update_stats(self.state, Hk, cols, num_classes=self.state.classes_seen)
            t2 = time.perf_counter()
            total.stats += t2 - t1
            pending = (Hk, cols)
            if (b + 1) % solve_every == 0:
                t2 = time.perf_counter()
                lam = self._select_lambda(Hk, cols)
                t3 = time.perf_counter()
                self._solve(lam)
                total.selection += t3 - t2
                total.solve += time.perf_counter() - t3
                pending = None
        if pending is not None:
            Hk, cols = pending
            t2 = time.perf_counter()
            lam = self._select_lambda(Hk, cols)
            t3 = time.perf_counter()
            self._solve(lam)
            total.selection += t3 - t2
            total.solve += time.perf_counter() - t3
        if self.state is not None:
            self.state.tasks_seen += 1
        return total

    def predict_batch(self, V: np.ndarray) -> np.ndarray:
        acts, Hk = self._expand(V)
        if self.ablation.no_ridge:
            return cosine_predict_batch(self.bank, Hk)
        if self.state.C is None:
            raise ridge.Unsolved()
        if self.flags.dense_similarity or acts is None:
            scores = Hk @ self.state.C
        else:
            scores = kernels.activation_scores(acts, self.state.C)
        cols = np.argmax(scores, axis=1)
        return np.asarray(self.state.class_ids, dtype=np.int64)[cols]

    def correlation_stages(self, subset: list[int]):
        """Pearson matrices for the three pipeline stages on a class subset."""
        out = []
        if self.raw_bank is None:
            return out
        raw = np.stack([self.raw_bank.prototype(c) for c in subset])
        out.append(prototype_correlations(raw, stage="raw"))
        proj = np.stack([self.proj_bank.prototype(c) for c in subset])
        out.append(prototype_correlations(proj, stage="projected"))
        if self.state is not None and self.state.C is not None:
            active = np.nonzero(np.abs(proj).max(axis=0) > 0)[0]
            col_of = {cls: j for j, cls in enumerate(self.state.class_ids)}
            mod = np.stack([self.state.C[active, col_of[c]] for c in subset])
            out.append(prototype_correlations(mod, stage="modulated"))
        for corr in out:
            corr.class_subset = list(subset)
        return out


@dataclass
class ExperimentConfig:
    data: str | None = None
    test_data: str | None = None
    manifest: str | None = None
    synth: SynthSpec | None = None
    pipeline: str = "fly"                     # fly | ncm
    flags: PipelineFlags = field(default_factory=PipelineFlags)
    ablation: AblationFlags = field(default_factory=AblationFlags)
    m: int = 10000
    p: int = 300
    k: int = 3000
    lambda_min: float = GRID_GENERAL[0]
    lambda_max: float = GRID_GENERAL[1]
    lambda_points: int = GRID_GENERAL[2]
    fixed_lambda: float | None = None
    seed: int = 0
    tasks: int | None = None
    classes_per_task: int | None = None
    holdout_fraction: float = 0.2
    online: bool = False
    batch_size: int = 128
    solve_every: int = 1
    out: str | None = None
    correlations: bool = False
    correlation_subset: int = 10

    def grid(self) -> np.ndarray:
        return lambda_grid(self.lambda_min, self.lambda_max, self.lambda_points)


def _load_data(config: ExperimentConfig):
    if config.synth is not None:
        ds = generate(config.synth)
        return holdout_split(ds, config.holdout_fraction, config.seed)
    if config.data is None:
        raise ConfigError("data", "either a dataset path or a synth spec is required")
    train = read_embedding_file(config.data)
    if config.test_data:
        test = read_embedding_file(config.test_data)
        if test.dim != train.dim:
            raise ConfigError("test-data", f"dimension {test.dim} != train {train.dim}")
        return train, test
    return holdout_split(train, config.holdout_fraction, config.seed)


def _load_manifest(config: ExperimentConfig, train: EmbeddingDataset) -> TaskManifest:
    if config.manifest:
        return load_manifest(config.manifest)
    num_tasks = config.tasks or 5
    per_task = config.classes_per_task or train.num_classes // num_tasks
    if per_task < 1 or num_tasks * per_task > train.num_classes:
        raise ConfigError("tasks/classes-per-task",
                          f"{num_tasks} tasks x {per_task} classes exceed "
                          f"{train.num_classes} available classes")
    return make_manifest(train.num_classes, num_tasks, per_task, config.seed)


def _validate_hyperparams(config: ExperimentConfig, dim: int) -> None:
    uses_projection = config.pipeline == "fly" and not config.ablation.no_projection
    if uses_projection:
        if config.m <= dim:
            raise ConfigError("m", f"expanded dim m={config.m} must exceed d={dim}")
        if not 0 < config.p < dim:
            raise ConfigError("p", f"need 0 < p < d, got p={config.p}, d={dim}")
        if not 1 <= config.k <= config.m:
            raise ConfigError("k", f"need 1 <= k <= m, got k={config.k}, m={config.m}")
    config.grid()


def build_pipeline(config: ExperimentConfig, dim: int):
    if config.pipeline == "ncm":
        return NcmPipeline(dim)
    if config.pipeline == "fly":
        return FlyPipeline(dim, config.m, config.p, config.k, config.grid(),
                           config.seed, config.flags, config.ablation,
                           config.fixed_lambda,
                           track_correlations=config.correlations)
    raise ConfigError("pipeline", f"unknown pipeline '{config.pipeline}'")


def _chunk_batch(batch: TaskBatch, size: int):
    for lo in range(0, len(batch.labels), size):
        yield TaskBatch(batch.features[lo:lo + size], batch.labels[lo:lo + size],
                        batch.task_index, batch.cumulative_classes)


def _extraction_seconds(config: ExperimentConfig, num_tasks: int) -> list[float]:
    """Per-task feature-extraction seconds from a timing sidecar, if present."""
    if not config.data:
        return [0.0] * num_tasks
    sidecar = config.data + ".timing.json"
    try:
        with open(sidecar, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        return [0.0] * num_tasks
    val = doc.get("extraction_seconds_per_task", 0.0)
    if isinstance(val, list):
        if len(val) < num_tasks:
            val = val + [val[-1] if val else 0.0] * (num_tasks - len(val))
        return [float(x) for x in val[:num_tasks]]
    return [float(val)] * num_tasks


def run_cil(config: ExperimentConfig) -> RunReport:
    """Train tasks in order, evaluating after each on the cumulative test set."""
    train, test = _load_data(config)
    manifest = _load_manifest(config, train)
    manifest.validate(train.num_classes)
    _validate_hyperparams(config, train.dim)
    batches = split_tasks(train, manifest)
    pipe = build_pipeline(config, train.dim)
    task_of_class = {cls: t for t, classes in enumerate(manifest.tasks) for cls in classes}
    extraction = _extraction_seconds(config, len(batches))

    report = RunReport(config=_config_dict(config))
    seen: list[int] = []
    for t, batch in enumerate(batches):
        seen.extend(manifest.tasks[t])
        t0 = time.perf_counter()
        if config.online:
            timings = pipe.train_task_online(_chunk_batch(batch, config.batch_size),
                                             config.solve_every)
        else:
            timings = pipe.train_task(batch)
        wall = time.perf_counter() - t0
        tau_train, tau_post = timing_split(wall + extraction[t], extraction[t])
        report.tau_train.append(tau_train)
        report.tau_post.append(tau_post)
        for key in ("projection", "sparsify", "stats", "selection", "solve"):
            report.component_seconds[key] = (
                report.component_seconds.get(key, 0.0) + getattr(timings, key))

        mask = np.isin(test.labels, seen)
        preds = pipe.predict_batch(test.features[mask])
        row = stage_accuracy(preds, test.labels[mask], task_of_class, t)
        report.add_stage(row)

    report.lambda_history = list(pipe.lambda_history)
    if config.correlations and isinstance(pipe, FlyPipeline):
        subset = sorted(task_of_class)[: config.correlation_subset]
        report.correlations = pipe.correlation_stages(subset)
    if config.out:
        from .analysis import emit_report
        emit_report(report, config.out)
    return report


def _config_dict(config: ExperimentConfig) -> dict:
    doc = {
        "pipeline": config.pipeline,
        "m": config.m, "p": config.p, "k": config.k,
        "lambda_min": config.lambda_min, "lambda_max": config.lambda_max,
        "lambda_points": config.lambda_points,
        "fixed_lambda": config.fixed_lambda,
        "seed": config.seed,
        "online": config.online,
        "batch_size": config.batch_size,
        "solve_every": config.solve_every,
        "holdout_fraction": config.holdout_fraction,
        "flags": vars(config.flags).copy(),
        "ablation": vars(config.ablation).copy(),
        "data": config.data, "test_data": config.test_data,
        "manifest": config.manifest,
        "backend": kernels.backend_name(),
    }
    if config.synth is not None:
        doc["synth"] = vars(config.synth).copy()
    return doc


def run_sweep(config: ExperimentConfig, axis: str, values) -> list[dict]:
    """One run per value on a shared seed; returns consolidated rows."""
    allowed = {"m", "p", "k", "lambda-points"}
    if axis not in allowed:
        raise ConfigError("axis", f"must be one of {sorted(allowed)}, got '{axis}'")
    values = list(values)
    if len(set(values)) != len(values):
        raise ConfigError("values", "duplicate sweep values")
    rows = []
    for value in values:
        if axis == "lambda-points":
            cfg = replace(config, lambda_points=int(value), out=None)
        else:
            cfg = replace(config, **{axis: int(value)}, out=None)
        rep = run_cil(cfg)
        rows.append({
            "value": value,
            "final_stage_accuracy": rep.stage_averages[-1],
            "overall_accuracy": rep.overall,
            "tau_post_mean": float(np.mean(rep.tau_post)),
        })
    if config.out:
        import csv
        import os

        os.makedirs(config.out, exist_ok=True)
        path = os.path.join(config.out, f"sweep_{axis}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["value", "A_T", "overall", "tau_post_mean"])
            for row in rows:
                writer.writerow([row["value"], repr(row["final_stage_accuracy"]),
                                 repr(row["overall_accuracy"]),
                                 repr(row["tau_post_mean"])])
    return rows
