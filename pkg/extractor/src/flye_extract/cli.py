"""Command-line surface: `extract` (images -> FLYE + sidecar) and
`make-manifest` (seed-shuffled disjoint task groups)."""

import argparse
import json
import sys

from .extract import DatasetNotFound, ExtractionJob, ModelLoadError, ShapeMismatch, extract
from .formats import make_task_groups, write_manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="flye-extract",
        description="Frozen-backbone image feature extraction into FLYE files")
    subs = parser.add_subparsers(dest="command", required=True)

    ex = subs.add_parser("extract", help="extract features from an image folder")
    ex.add_argument("--dataset", required=True, help="ImageFolder-style directory")
    ex.add_argument("--out", required=True, help="output FLYE path")
    ex.add_argument("--backbone", choices=["vit-b16", "resnet50"], default="vit-b16")
    ex.add_argument("--normalization", choices=["none", "imagenet", "standard"],
                    default="standard")
    ex.add_argument("--batch-size", type=int, default=32)
    ex.add_argument("--device", default="cpu")
    ex.add_argument("--tasks", type=int, default=10,
                    help="task count used to amortize extraction time")
    ex.add_argument("--weights", help="local checkpoint to load")
    ex.add_argument("--pretrained", action="store_true",
                    help="download torchvision pretrained weights")
    ex.add_argument("--random-init", action="store_true",
                    help="run without trained weights (format testing)")

    mm = subs.add_parser("make-manifest", help="write a disjoint task manifest")
    mm.add_argument("--out", required=True)
    mm.add_argument("--num-classes", type=int, required=True)
    mm.add_argument("--tasks", type=int, required=True)
    mm.add_argument("--classes-per-task", type=int, required=True)
    mm.add_argument("--seed", type=int, default=0)
    mm.add_argument("--dataset", default="")

    args = parser.parse_args(argv)
    try:
        if args.command == "extract":
            job = ExtractionJob(
                dataset_path=args.dataset, backbone=args.backbone,
                normalization=args.normalization, batch_size=args.batch_size,
                device=args.device, output_path=args.out, tasks=args.tasks,
                weights_path=args.weights, pretrained=args.pretrained,
                random_init=args.random_init)
            summary = extract(job)
            print(json.dumps(summary, indent=2))
            return 0
        if args.command == "make-manifest":
            groups = make_task_groups(args.num_classes, args.tasks,
                                      args.classes_per_task, args.seed)
            write_manifest(args.out, groups, args.seed, args.classes_per_task,
                           dataset=args.dataset)
            print(f"wrote {args.out}: {args.tasks} tasks x {args.classes_per_task}")
            return 0
    except (ModelLoadError, DatasetNotFound, ShapeMismatch, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
