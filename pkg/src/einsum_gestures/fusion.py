#
# This file is part of einsum_gestures
# (c) Copyright 2026 by the einsum_gestures authors
# Licensed under the AGPL-3.0; see LICENSE.txt file.
#

"""
Decision-level fusion of per-device posteriors and evaluation metrics
"""

import csv
from dataclasses import dataclass, field
from einsum_gestures.report import Report, markdown_table
from logging import getLogger
import numpy as np
from pathlib import Path
from sklearn.metrics import (
    accuracy_score,
    confusion_matrix as sk_confusion_matrix,
    precision_recall_fscore_support,
)
from sklearn.model_selection import train_test_split

LOG_FLOOR = -745.0
SIMPLEX_TOLERANCE = 1e-9
FUSION_MODES = ("product", "average")

logger = getLogger(__name__)


class FusionError(ValueError):
    def __init__(self, msg):
        super().__init__(msg)


def _stack(posteriors, check: bool = True) -> np.ndarray:
    """Stack F posteriors of equal shape (C,) or (N, C) into one (F, ..., C) array."""
    if len(posteriors) == 0:
        raise FusionError("No posteriors to fuse.")
    arrays = [np.asarray(p, dtype=float) for p in posteriors]
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise FusionError(f"Posterior shapes differ: {shape} vs {a.shape}.")
    if len(shape) not in (1, 2) or shape[-1] < 1:
        raise FusionError(f"Posteriors must be (C,) or (N, C), got {shape}.")
    stacked = np.stack(arrays)
    if not np.all(np.isfinite(stacked)) or np.any(stacked < 0):
        raise FusionError("Posteriors must be finite and non-negative.")
    if check:
        sums = stacked.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > SIMPLEX_TOLERANCE):
            raise FusionError(
                f"Posteriors must sum to 1 within {SIMPLEX_TOLERANCE}; worst sum is "
                f"{sums.flat[np.argmax(np.abs(sums - 1.0))]!r}."
            )
    return stacked


def joint_log_scores(posteriors, check: bool = True) -> np.ndarray:
    """
    Sum over devices of log P(c | device), with zero probabilities floored at LOG_FLOOR.

    With check=False the inputs need not be normalized; the argmax is then unchanged by a
    positive rescaling of any single input.
    """
    stacked = _stack(posteriors, check=check)
    with np.errstate(divide="ignore"):
        logs = np.log(stacked)
    return np.sum(np.maximum(logs, LOG_FLOOR), axis=0)


def fuse_scores(posteriors, mode: str = "product") -> np.ndarray:
    """Class scores used for the fused decision: joint log scores, or mean posteriors."""
    if mode == "product":
        return joint_log_scores(posteriors)
    elif mode == "average":
        return np.mean(_stack(posteriors), axis=0)
    raise FusionError(f"Unknown fusion mode {mode!r}; expected one of {FUSION_MODES}.")


def fuse_predict(posteriors, mode: str = "product"):
    """1-based fused class (int for one sample, array for a batch); ties go to the lower class."""
    scores = fuse_scores(posteriors, mode)
    if scores.ndim == 1:
        return int(np.argmax(scores)) + 1
    return np.argmax(scores, axis=1) + 1


def confusion_matrix(y_true, y_pred, classes: int) -> tuple:
    """
    Raw counts and row-normalized confusion matrices over 1-based classes 1..classes.

    Rows are true classes. Rows without support stay all zero in the normalized matrix.
    """
    labels = list(range(1, classes + 1))
    raw = sk_confusion_matrix(y_true, y_pred, labels=labels)
    support = raw.sum(axis=1, keepdims=True)
    normalized = np.divide(
        raw, support, out=np.zeros(raw.shape, dtype=float), where=support > 0
    )
    return raw, normalized


@dataclass
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray = field(repr=False)
    normalized_confusion: np.ndarray = field(repr=False)
    sample_count: int = 0

    def metrics(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "sample_count": self.sample_count,
        }

    def to_dict(self) -> dict:
        d = self.metrics()
        d["confusion"] = self.confusion.tolist()
        return d


def evaluate(y_true, y_pred, classes: int) -> EvalReport:
    """Accuracy plus support-weighted and macro precision, recall and F1, in percent."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if len(y_true) == 0:
        raise FusionError("Cannot evaluate an empty test set.")
    if y_true.shape != y_pred.shape:
        raise FusionError(f"{len(y_true)} labels but {len(y_pred)} predictions.")
    for name, y in (("label", y_true), ("prediction", y_pred)):
        if np.any(y < 1) or np.any(y > classes):
            raise FusionError(f"A {name} lies outside classes 1..{classes}.")
    labels = list(range(1, classes + 1))
    present = sorted(set(y_true.tolist()))
    p, r, f, _ = precision_recall_fscore_support(
        y_true, y_pred, labels=labels, average="weighted", zero_division=0
    )
    mp, mr, mf, _ = precision_recall_fscore_support(
        y_true, y_pred, labels=present, average="macro", zero_division=0
    )
    raw, normalized = confusion_matrix(y_true, y_pred, classes)
    return EvalReport(
        accuracy=100.0 * accuracy_score(y_true, y_pred),
        precision=100.0 * p,
        recall=100.0 * r,
        f1=100.0 * f,
        macro_precision=100.0 * mp,
        macro_recall=100.0 * mr,
        macro_f1=100.0 * mf,
        confusion=raw,
        normalized_confusion=normalized,
        sample_count=len(y_true),
    )


def evaluate_models(models: dict, features: dict, labels, mode: str = "product") -> dict:
    """
    Evaluate each model on its own feature matrix and the fused decision of all of them.

    models and features share keys (bundle kinds); returns {kind: EvalReport, "fused": ...}.
    """
    if set(models) != set(features):
        raise FusionError(
            f"Models {sorted(models)} and feature sets {sorted(features)} differ."
        )
    labels = np.asarray(labels, dtype=int)
    classes = {m.spec.classes for m in models.values()}
    if len(classes) != 1:
        raise FusionError(f"Models disagree on the number of classes: {sorted(classes)}.")
    classes = classes.pop()
    reports, posteriors = dict(), list()
    for kind in sorted(models):
        post = np.atleast_2d(models[kind].posterior(features[kind]))
        if len(post) != len(labels):
            raise FusionError(f"{len(post)} {kind} samples but {len(labels)} labels.")
        posteriors.append(post)
        reports[kind] = evaluate(labels, np.argmax(post, axis=1) + 1, classes)
        logger.info(f"{kind} accuracy: {reports[kind].accuracy:.2f}%")
    reports["fused"] = evaluate(labels, fuse_predict(posteriors, mode), classes)
    logger.info(f"fused ({mode}) accuracy: {reports['fused'].accuracy:.2f}%")
    return reports


def stratified_split(labels, test_fraction: float = 0.2, seed: int = 0) -> tuple:
    """Seeded stratified train/test index split."""
    labels = np.asarray(labels)
    if not 0.0 < test_fraction < 1.0:
        raise FusionError(f"Test fraction must lie in (0, 1), got {test_fraction}.")
    index = np.arange(len(labels))
    train, test = train_test_split(
        index, test_size=test_fraction, random_state=seed, stratify=labels
    )
    return np.sort(train), np.sort(test)


def write_confusion(path: Path, report: EvalReport, normalized: bool = True):
    """Comma-separated confusion matrix, one row per true class, with a header row."""
    matrix = report.normalized_confusion if normalized else report.confusion
    classes = matrix.shape[0]
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["true"] + [str(c) for c in range(1, classes + 1)])
        for c, row in enumerate(matrix, start=1):
            if normalized:
                writer.writerow([c] + [f"{v:.6f}" for v in row])
            else:
                writer.writerow([c] + [int(v) for v in row])


def render_report(reports: dict, title: str = "Gesture recognition evaluation") -> Report:
    rows = [
        [
            name,
            f"{r.accuracy:.2f}",
            f"{r.precision:.2f}",
            f"{r.recall:.2f}",
            f"{r.f1:.2f}",
            r.sample_count,
        ]
        for name, r in reports.items()
    ]
    table = markdown_table(
        ["Model", "Accuracy", "Precision", "Recall", "F1", "Samples"], rows
    )
    best = max((k for k in reports if k != "fused"), key=lambda k: reports[k].accuracy, default=None)
    summary = ""
    if "fused" in reports and best is not None:
        summary = (
            f"Fused accuracy {reports['fused'].accuracy:.2f}% against "
            f"{reports[best].accuracy:.2f}% for the best single model ({best})."
        )
    return Report(
        title=title,
        summary=summary,
        markdown="\n\n".join(s for s in (f"# {title}", summary, table) if s),
    )
