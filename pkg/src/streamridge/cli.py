"""Command-line entry point.

Subcommands: run (one incremental experiment), sweep (one axis, many values),
bench (component timings, optimized vs vanilla), synth (emit a synthetic
embedding file), validate (check an embedding file and optional manifest).
Config files are JSON with the same keys as the long flags; command-line
flags win over the file.
"""

import argparse
import json
import sys

import numpy as np

from . import kernels
from .bench import BenchConfig, run_bench
from .embed_store import (
    load_manifest,
    make_manifest,
    read_embedding_file,
    save_manifest,
    write_embedding_file,
)
from .errors import ConfigError, StreamridgeError
from .pipeline import (
    AblationFlags,
    ExperimentConfig,
    PipelineFlags,
    run_cil,
    run_sweep,
)
from .synthgen import SynthSpec, generate


def _add_run_args(sub):
    sub.add_argument("--data", help="training embedding file (FLYE)")
    sub.add_argument("--test-data", help="test embedding file; defaults to a holdout split")
    sub.add_argument("--manifest", help="task manifest file (JSON)")
    sub.add_argument("--config", help="JSON config file; flags override its keys")
    sub.add_argument("--out", help="output directory for report files")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--pipeline", choices=["fly", "ncm"], default="fly")
    sub.add_argument("--m", type=int, default=10000, help="expanded dimension")
    sub.add_argument("--p", type=int, default=300, help="nonzeros per projection row")
    sub.add_argument("--k", type=int, default=3000, help="active entries kept per sample")
    sub.add_argument("--lambda-min", type=float, default=1e4)
    sub.add_argument("--lambda-max", type=float, default=1e9)
    sub.add_argument("--lambda-points", type=int, default=21)
    sub.add_argument("--fixed-lambda", type=float, default=None,
                     help="skip selection and use this penalty")
    sub.add_argument("--online", action="store_true", help="per-batch streaming mode")
    sub.add_argument("--batch-size", type=int, default=128)
    sub.add_argument("--solve-every", type=int, default=1)
    sub.add_argument("--tasks", type=int, default=None)
    sub.add_argument("--classes-per-task", type=int, default=None)
    sub.add_argument("--holdout-fraction", type=float, default=0.2)
    sub.add_argument("--correlations", action="store_true",
                     help="emit per-stage prototype correlation matrices")
    sub.add_argument("--dense-projection", action="store_true")
    sub.add_argument("--explicit-cv", action="store_true")
    sub.add_argument("--lu-solve", action="store_true")
    sub.add_argument("--dense-similarity", action="store_true")
    sub.add_argument("--no-projection", action="store_true",
                     help="ablation: ridge on raw features")
    sub.add_argument("--no-ridge", action="store_true",
                     help="ablation: cosine prototypes on expanded features")
    sub.add_argument("--synth-classes", type=int)
    sub.add_argument("--synth-dim", type=int)
    sub.add_argument("--synth-samples", type=int)
    sub.add_argument("--synth-rho", type=float)
    sub.add_argument("--synth-noise", type=float)


_SYNTH_KEYS = ("synth_classes", "synth_dim", "synth_samples", "synth_rho", "synth_noise")


def _merge_config_file(args: argparse.Namespace, parser_defaults: dict):
    """File values apply only where the command line kept the default."""
    if not args.config:
        return
    with open(args.config, encoding="utf-8") as fh:
        doc = json.load(fh)
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ConfigError(key, "unknown config key")
        if getattr(args, attr) == parser_defaults.get(attr):
            setattr(args, attr, value)


def _synth_spec(args) -> SynthSpec | None:
    if not any(getattr(args, k, None) is not None for k in _SYNTH_KEYS):
        return None
    return SynthSpec(
        num_classes=args.synth_classes or 10,
        dim=args.synth_dim or 384,
        samples_per_class=args.synth_samples or 50,
        common_strength=args.synth_rho if args.synth_rho is not None else 0.3,
        noise=args.synth_noise if args.synth_noise is not None else 0.1,
        seed=args.seed,
    )


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(
        data=args.data,
        test_data=args.test_data,
        manifest=args.manifest,
        synth=_synth_spec(args),
        pipeline=args.pipeline,
        flags=PipelineFlags(
            dense_projection=args.dense_projection,
            explicit_cv=args.explicit_cv,
            lu_solve=args.lu_solve,
            dense_similarity=args.dense_similarity,
        ),
        ablation=AblationFlags(
            no_projection=args.no_projection,
            no_ridge=args.no_ridge,
        ),
        m=args.m, p=args.p, k=args.k,
        lambda_min=args.lambda_min, lambda_max=args.lambda_max,
        lambda_points=args.lambda_points,
        fixed_lambda=args.fixed_lambda,
        seed=args.seed,
        tasks=args.tasks, classes_per_task=args.classes_per_task,
        holdout_fraction=args.holdout_fraction,
        online=args.online, batch_size=args.batch_size,
        solve_every=args.solve_every,
        out=args.out,
        correlations=args.correlations,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="streamridge",
        description="Streaming class-incremental classifier over precomputed embeddings",
    )
    parser.add_argument("--version", action="version", version="streamridge 0.1.0")
    subs = parser.add_subparsers(dest="command", required=True)

    run_p = subs.add_parser("run", help="run one incremental experiment")
    _add_run_args(run_p)

    sweep_p = subs.add_parser("sweep", help="run one experiment per axis value")
    _add_run_args(sweep_p)
    sweep_p.add_argument("--axis", required=True, choices=["m", "p", "k", "lambda-points"])
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated values, e.g. 1000,2000,5000")

    bench_p = subs.add_parser("bench", help="time optimized vs vanilla components")
    bench_p.add_argument("--m", type=int, default=10000)
    bench_p.add_argument("--d", type=int, default=768)
    bench_p.add_argument("--p", type=int, default=300)
    bench_p.add_argument("--k", type=int, default=3000)
    bench_p.add_argument("--n", type=int, default=600, help="samples in the task")
    bench_p.add_argument("--classes", type=int, default=20)
    bench_p.add_argument("--seed", type=int, default=0)
    bench_p.add_argument("--repeats", type=int, default=3)
    bench_p.add_argument("--lambda-min", type=float, default=1e4)
    bench_p.add_argument("--lambda-max", type=float, default=1e9)
    bench_p.add_argument("--lambda-points", type=int, default=13)
    bench_p.add_argument("--components", default="projection,selection,solve,similarity",
                         help="comma-separated subset to run")
    bench_p.add_argument("--compare-backends", action="store_true",
                         help="also time the NumPy fallback kernels")
    bench_p.add_argument("--out", help="output directory")

    synth_p = subs.add_parser("synth", help="emit a synthetic embedding file")
    synth_p.add_argument("--out", required=True, help="output FLYE path")
    synth_p.add_argument("--classes", type=int, default=10)
    synth_p.add_argument("--dim", type=int, default=384)
    synth_p.add_argument("--samples-per-class", type=int, default=50)
    synth_p.add_argument("--rho", type=float, default=0.3,
                         help="shared-direction strength of class means")
    synth_p.add_argument("--noise", type=float, default=0.1)
    synth_p.add_argument("--seed", type=int, default=0)
    synth_p.add_argument("--manifest-out", help="also write a task manifest here")
    synth_p.add_argument("--tasks", type=int, default=5)
    synth_p.add_argument("--classes-per-task", type=int, default=None)

    val_p = subs.add_parser("validate", help="check an embedding file and manifest")
    val_p.add_argument("--data", required=True)
    val_p.add_argument("--manifest")

    subparsers = {"run": run_p, "sweep": sweep_p, "bench": bench_p,
                  "synth": synth_p, "validate": val_p}
    args = parser.parse_args(argv)
    try:
        return _dispatch(parser, subparsers, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StreamridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1


def _dispatch(parser, subparsers, args) -> int:
    if args.command in ("run", "sweep"):
        defaults = {a.dest: a.default for a in subparsers[args.command]._actions}
        _merge_config_file(args, defaults)

    if args.command == "run":
        config = _experiment_config(args)
        report = run_cil(config)
        print(json.dumps({
            "overall_accuracy": report.overall,
            "stage_averages": report.stage_averages,
            "tau_train_mean": float(np.mean(report.tau_train)),
            "tau_post_mean": float(np.mean(report.tau_post)),
            "lambda_history": report.lambda_history,
            "backend": kernels.backend_name(),
        }, indent=2))
        return 0

    if args.command == "sweep":
        config = _experiment_config(args)
        values = [v for v in args.values.split(",") if v]
        rows = run_sweep(config, args.axis, values)
        print(json.dumps(rows, indent=2))
        return 0

    if args.command == "bench":
        config = BenchConfig(
            m=args.m, d=args.d, p=args.p, k=args.k, n_task=args.n,
            classes=args.classes, seed=args.seed, repeats=args.repeats,
            lambda_min=args.lambda_min, lambda_max=args.lambda_max,
            lambda_points=args.lambda_points,
            components=tuple(c for c in args.components.split(",") if c),
            compare_backends=args.compare_backends,
            out=args.out,
        )
        result = run_bench(config)
        print(json.dumps(result, indent=2))
        return 0

    if args.command == "synth":
        spec = SynthSpec(num_classes=args.classes, dim=args.dim,
                         samples_per_class=args.samples_per_class,
                         common_strength=args.rho, noise=args.noise, seed=args.seed)
        ds = generate(spec)
        write_embedding_file(ds, args.out)
        print(f"wrote {args.out}: n={ds.n} d={ds.dim} classes={ds.num_classes}")
        if args.manifest_out:
            per_task = args.classes_per_task or args.classes // args.tasks
            manifest = make_manifest(args.classes, args.tasks, per_task, args.seed,
                                     dataset=args.out)
            save_manifest(manifest, args.manifest_out)
            print(f"wrote {args.manifest_out}: {args.tasks} tasks x {per_task} classes")
        return 0

    if args.command == "validate":
        ds = read_embedding_file(args.data)
        print(f"{args.data}: ok (n={ds.n}, d={ds.dim}, classes={ds.num_classes}, "
              f"names={'yes' if ds.class_names else 'no'})")
        if args.manifest:
            manifest = load_manifest(args.manifest)
            manifest.validate(ds.num_classes)
            print(f"{args.manifest}: ok ({len(manifest.tasks)} tasks, "
                  f"classes {sorted(manifest.all_classes())[:8]}...)")
        return 0

    parser.error(f"unknown command {args.command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
