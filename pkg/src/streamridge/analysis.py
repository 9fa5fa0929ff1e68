"""Evaluation metrics, stage timing bookkeeping, and report emission.

Accuracy follows the incremental-evaluation convention: after training task
t, a_{t,i} is the test accuracy on task i's classes (i <= t), A_t is the mean
over i, and the overall score is the mean of A_1..A_T.  Reports are written
as versioned JSON plus flat CSV tables for external plotting.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTestSet, NegativeTime, ZeroVariance

REPORT_SCHEMA_VERSION = 1


def stage_accuracy(predictions: np.ndarray, labels: np.ndarray,
                   task_of_class: dict[int, int], upto_task: int) -> list[float]:
    """Per-task accuracy percentages a_{t, 1..t} after training task t.

    ``task_of_class`` maps global class id to the task that introduced it;
    samples are grouped by the task of their true label.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if len(predictions) != len(labels):
        raise EmptyTestSet(
            f"predictions ({len(predictions)}) misaligned with labels ({len(labels)})")
    if len(labels) == 0:
        raise EmptyTestSet("no test samples")
    sample_task = np.array([task_of_class[int(lab)] for lab in labels])
    row = []
    for i in range(upto_task + 1):
        sel = sample_task == i
        if not sel.any():
            raise EmptyTestSet(f"no test samples for task {i}")
        row.append(100.0 * float((predictions[sel] == labels[sel]).mean()))
    return row


def overall_accuracy(stage_averages) -> float:
    """Mean of the per-stage averages A_1..A_T."""
    values = list(stage_averages)
    if not values:
        raise EmptyTestSet("no stages to average")
    return float(np.mean(values))


def timing_split(total: float, extraction: float):
    """(tau_train, tau_post): training time with and without extraction."""
    if extraction > total:
        raise NegativeTime(total, extraction)
    return total, total - extraction


@dataclass
class CorrelationMatrix:
    stage: str                  # raw | projected | modulated
    class_subset: list[int]
    matrix: np.ndarray

    def mean_abs_offdiag(self) -> float:
        c = self.matrix.shape[0]
        if c < 2:
            return 0.0
        off = ~np.eye(c, dtype=bool)
        return float(np.abs(self.matrix[off]).mean())


def prototype_correlations(vectors: np.ndarray, subset=None,
                           stage: str = "raw") -> CorrelationMatrix:
    """Pairwise Pearson coefficients across vector components."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if subset is None:
        subset = list(range(vectors.shape[0]))
    chosen = vectors[list(subset)]
    if chosen.shape[0] < 2:
        raise ZeroVariance(-1)
    sd = chosen.std(axis=1)
    for i, s in enumerate(sd):
        if s == 0:
            raise ZeroVariance(list(subset)[i])
    centered = chosen - chosen.mean(axis=1, keepdims=True)
    normed = centered / np.linalg.norm(centered, axis=1, keepdims=True)
    corr = np.clip(normed @ normed.T, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return CorrelationMatrix(stage=stage, class_subset=list(subset), matrix=corr)


@dataclass
class RunReport:
    config: dict
    accuracy_rows: list[list[float]] = field(default_factory=list)  # a_{t,i}
    stage_averages: list[float] = field(default_factory=list)       # A_t
    tau_train: list[float] = field(default_factory=list)
    tau_post: list[float] = field(default_factory=list)
    component_seconds: dict = field(default_factory=dict)
    lambda_history: list[float] = field(default_factory=list)
    correlations: list[CorrelationMatrix] = field(default_factory=list)

    @property
    def overall(self) -> float:
        return overall_accuracy(self.stage_averages)

    def add_stage(self, row: list[float]) -> None:
        self.accuracy_rows.append(row)
        self.stage_averages.append(float(np.mean(row)))

    def to_json_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config,
            "accuracy_rows": self.accuracy_rows,
            "stage_averages": self.stage_averages,
            "overall_accuracy": self.overall if self.stage_averages else None,
            "tau_train": self.tau_train,
            "tau_post": self.tau_post,
            "component_seconds": self.component_seconds,
            "lambda_history": self.lambda_history,
            "correlations": [
                {
                    "stage": c.stage,
                    "class_subset": c.class_subset,
                    "matrix": c.matrix.tolist(),
                    "mean_abs_offdiag": c.mean_abs_offdiag(),
                }
                for c in self.correlations
            ],
        }


def emit_report(report: RunReport, out_dir, formats=("json", "csv")) -> dict:
    """Write report files under out_dir; returns {kind: path}."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = {}
    if "json" in formats:
        path = os.path.join(out_dir, "report.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=2)
            fh.write("\n")
        written["json"] = path
    if "csv" in formats:
        acc_path = os.path.join(out_dir, "accuracy.csv")
        with open(acc_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["after_task", "task", "accuracy_pct"])
            for t, row in enumerate(report.accuracy_rows):
                for i, acc in enumerate(row):
                    writer.writerow([t, i, repr(acc)])
            writer.writerow([])
            writer.writerow(["stage", "A_t"])
            for t, a in enumerate(report.stage_averages):
                writer.writerow([t, repr(a)])
        written["accuracy_csv"] = acc_path

        t_path = os.path.join(out_dir, "timing.csv")
        with open(t_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task", "tau_train_s", "tau_post_s"])
            for t, (tr, po) in enumerate(zip(report.tau_train, report.tau_post)):
                writer.writerow([t, repr(tr), repr(po)])
            writer.writerow([])
            writer.writerow(["component", "seconds"])
            for name, secs in report.component_seconds.items():
                writer.writerow([name, repr(secs)])
        written["timing_csv"] = t_path

        if report.correlations:
            c_path = os.path.join(out_dir, "correlations.csv")
            with open(c_path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["stage", "row_class", "col_class", "pearson"])
                for corr in report.correlations:
                    ids = corr.class_subset
                    for a in range(len(ids)):
                        for b in range(len(ids)):
                            writer.writerow([corr.stage, ids[a], ids[b],
                                             repr(float(corr.matrix[a, b]))])
            written["correlations_csv"] = c_path
    return written


def read_stage_averages_csv(path) -> list[float]:
    """Recover A_t values from an emitted accuracy.csv (parse-back oracle)."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    in_stages = False
    for row in rows:
        if not row:
            continue
        if row[0] == "stage":
            in_stages = True
            continue
        if in_stages:
            out.append(float(row[1]))
    return out
