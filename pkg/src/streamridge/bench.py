"""Component timing harness: optimized vs vanilla, compiled vs fallback.

Times the four post-extraction components on identical data and seeds:

    projection   sparse kernel            vs dense matmul
    selection    GCV via thin SVD         vs explicit 5-fold CV, full solves
    solve        Cholesky                 vs LU
    similarity   sparse activation scores vs dense matmul

Each optimized measurement takes the best of ``repeats`` runs after a warm-up
call; the explicit-CV vanilla is measured once (it is the dominant cost by
far).  Optionally also reports compiled-vs-NumPy backend times for the two
kernel-backed components.
"""

import json
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import kernels, rng
from .pipeline import explicit_cv_select, lambda_grid
from .projector import build_projection, top_k_batch
from .ridge import gcv_select, new_state, solve_prototypes, solve_prototypes_lu, update_stats


@dataclass
class BenchConfig:
    m: int = 10000
    d: int = 768
    p: int = 300
    k: int = 3000
    n_task: int = 600
    classes: int = 20
    seed: int = 0
    repeats: int = 3
    lambda_min: float = 1e4
    lambda_max: float = 1e9
    lambda_points: int = 13
    components: tuple = ("projection", "selection", "solve", "similarity")
    compare_backends: bool = False
    out: str | None = None


def _best_of(fn, repeats: int) -> float:
    fn()  # warm-up excluded
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _log(msg: str):
    print(msg, file=sys.stderr, flush=True)


def run_bench(config: BenchConfig) -> dict:
    cfg = config
    grid = lambda_grid(cfg.lambda_min, cfg.lambda_max, cfg.lambda_points)
    V = rng.normals(cfg.seed, rng.STREAM_SYNTH_NOISE, 0, cfg.n_task * cfg.d)
    V = np.ascontiguousarray(V.reshape(cfg.n_task, cfg.d))
    labels = np.arange(cfg.n_task, dtype=np.int64) % cfg.classes

    W = build_projection(cfg.seed, cfg.m, cfg.d, cfg.p)
    result = {
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in vars(cfg).items()},
        "backend": kernels.backend_name(),
        "components": {},
    }
    comp = result["components"]

    _log(f"bench: m={cfg.m} d={cfg.d} p={cfg.p} k={cfg.k} n={cfg.n_task} "
         f"c={cfg.classes} backend={kernels.backend_name()}")

    Wd = W.densify()
    H_sparse = kernels.project_batch(W, V)
    H_dense = V @ Wd.T
    proj_err = float(np.abs(H_sparse - H_dense).max() / np.abs(H_dense).max())

    if "projection" in cfg.components:
        t_sparse = _best_of(lambda: kernels.project_batch(W, V), cfg.repeats)
        t_dense = _best_of(lambda: V @ Wd.T, cfg.repeats)
        comp["projection"] = {
            "optimized_s": t_sparse, "vanilla_s": t_dense,
            "speedup": t_dense / t_sparse, "max_rel_err": proj_err,
        }
        _log(f"  projection: sparse {t_sparse*1e3:.1f} ms vs dense {t_dense*1e3:.1f} ms "
             f"-> {t_dense/t_sparse:.2f}x")

    acts = top_k_batch(H_dense, cfg.k)
    Hk = acts.to_dense()

    if "selection" in cfg.components:
        t_gcv = _best_of(lambda: gcv_select(Hk, labels, cfg.classes, grid), cfg.repeats)
        _log(f"  selection: GCV path {t_gcv:.3f} s; running explicit 5-fold CV "
             f"({5 * len(grid)} full solves at m={cfg.m}) ...")
        done = [0]

        def progress(f, i):
            done[0] += 1
            if done[0] % 13 == 0:
                _log(f"    CV solve {done[0]}/{5 * len(grid)}")

        t0 = time.perf_counter()
        explicit_cv_select(Hk, labels, cfg.classes, grid, folds=5, use_lu=True,
                           progress=progress)
        t_cv = time.perf_counter() - t0
        comp["selection"] = {
            "optimized_s": t_gcv, "vanilla_s": t_cv, "speedup": t_cv / t_gcv,
        }
        _log(f"  selection: GCV {t_gcv:.3f} s vs explicit CV {t_cv:.1f} s "
             f"-> {t_cv/t_gcv:.1f}x")

    state = new_state(cfg.m)
    update_stats(state, Hk, labels, num_classes=cfg.classes)
    state.class_ids = list(range(cfg.classes))
    lam = float(np.median(grid))

    if "solve" in cfg.components:
        t_chol = _best_of(lambda: solve_prototypes(state, lam), max(1, cfg.repeats - 1))
        C_chol = state.C.copy()
        t_lu = _best_of(lambda: solve_prototypes_lu(state, lam), max(1, cfg.repeats - 1))
        solve_err = float(np.abs(C_chol - state.C).max()
                          / max(np.abs(state.C).max(), 1e-300))
        state.C = C_chol
        comp["solve"] = {
            "optimized_s": t_chol, "vanilla_s": t_lu,
            "speedup": t_lu / t_chol, "max_rel_err": solve_err,
        }
        _log(f"  solve: cholesky {t_chol:.2f} s vs LU {t_lu:.2f} s -> {t_lu/t_chol:.2f}x")

    if "similarity" in cfg.components:
        if state.C is None:
            solve_prototypes(state, lam)
        C = state.C
        scores_sparse = kernels.activation_scores(acts, C)
        scores_dense = Hk @ C
        sim_err = float(np.abs(scores_sparse - scores_dense).max()
                        / max(np.abs(scores_dense).max(), 1e-300))
        t_sim_sparse = _best_of(lambda: kernels.activation_scores(acts, C), cfg.repeats)
        t_sim_dense = _best_of(lambda: Hk @ C, cfg.repeats)
        comp["similarity"] = {
            "optimized_s": t_sim_sparse, "vanilla_s": t_sim_dense,
            "speedup": t_sim_dense / t_sim_sparse, "max_rel_err": sim_err,
        }
        _log(f"  similarity: sparse {t_sim_sparse*1e3:.1f} ms vs dense "
             f"{t_sim_dense*1e3:.1f} ms -> {t_sim_dense/t_sim_sparse:.2f}x")

    if cfg.compare_backends and kernels.compiled_available():
        t_proj_np = _best_of(lambda: kernels._project_batch_np(W, V), cfg.repeats)
        t_sim_np = _best_of(lambda: kernels._activation_scores_np(acts, state.C),
                            cfg.repeats)
        result["backend_comparison"] = {
            "projection": {"compiled_s": comp.get("projection", {}).get("optimized_s"),
                           "numpy_s": t_proj_np},
            "similarity": {"compiled_s": comp.get("similarity", {}).get("optimized_s"),
                           "numpy_s": t_sim_np},
        }
        _log(f"  backends: projection numpy {t_proj_np*1e3:.1f} ms, "
             f"similarity numpy {t_sim_np*1e3:.1f} ms")

    if cfg.out:
        import csv
        import os

        os.makedirs(cfg.out, exist_ok=True)
        jpath = os.path.join(cfg.out, "bench.json")
        with open(jpath, "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2)
            fh.write("\n")
        cpath = os.path.join(cfg.out, "bench.csv")
        with open(cpath, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["component", "optimized_s", "vanilla_s", "speedup"])
            for name, row in comp.items():
                writer.writerow([name, repr(row["optimized_s"]),
                                 repr(row["vanilla_s"]), repr(row["speedup"])])
    return result
