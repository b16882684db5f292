"""Classification metrics and clip-vote aggregation."""

from __future__ import annotations

import numpy as np

__all__ = ["compute_metrics", "aggregate_predictions"]


def aggregate_predictions(clip_probs: np.ndarray) -> int:
    """Mean the clip probability vectors, argmax; ties go to the lower class."""
    probs = np.asarray(clip_probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1:
        raise ValueError(f"need [n_clips, n_classes] probabilities, got {probs.shape}")
    return int(np.argmax(probs.mean(axis=0)))


def compute_metrics(preds, labels, n_classes: int) -> dict:
    """Accuracy, per-class precision/recall/F1 (0/0 -> 0), macro averages,
    and the confusion matrix (rows = true class, columns = predicted)."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ValueError(f"prediction/label shapes differ: {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise ValueError("cannot score an empty prediction vector")
    if preds.min() < 0 or preds.max() >= n_classes or labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"class indices out of range for {n_classes} classes")

    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)

    per_class = []
    for c in range(n_classes):
        tp = confusion[c, c]
        fp = confusion[:, c].sum() - tp
        fn = confusion[c, :].sum() - tp
        precision = float(tp / (tp + fp)) if tp + fp else 0.0
        recall = float(tp / (tp + fn)) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append({"class": c, "precision": precision, "recall": recall,
                          "f1": f1, "support": int(confusion[c, :].sum())})

    return {
        "accuracy": float(np.trace(confusion) / preds.size),
        "precision_macro": float(np.mean([pc["precision"] for pc in per_class])),
        "recall_macro": float(np.mean([pc["recall"] for pc in per_class])),
        "f1_macro": float(np.mean([pc["f1"] for pc in per_class])),
        "per_class": per_class,
        "confusion": confusion.tolist(),
    }
