"""Losses and metrics for two-class softmax outputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12


class SingleClassBatch(ValueError):
    pass


@dataclass(frozen=True)
class FocalLossParams:
    alpha: float = 1e-2
    gamma: float = 2.0

    def __post_init__(self):
        if self.alpha <= 0 or self.gamma < 0:
            raise ValueError("need alpha > 0 and gamma >= 0")


def focal_loss(p, params: FocalLossParams = FocalLossParams()):
    """``-alpha (1 - p)^gamma log p`` for the probability of the true class."""
    p = np.maximum(np.asarray(p, dtype=float), PROB_FLOOR)
    val = -params.alpha * (1.0 - p) ** params.gamma * np.log(p)
    return float(val) if np.ndim(val) == 0 else val


def focal_grad_logits(probs, onehot, params: FocalLossParams) -> np.ndarray:
    """Per-sample gradient of the focal loss with respect to the logits."""
    p = np.maximum(np.sum(probs * onehot, axis=1), PROB_FLOOR)
    a, g = params.alpha, params.gamma
    if g == 0:
        coef = -a * np.ones_like(p)
    else:
        coef = -a * ((1.0 - p) ** g - g * (1.0 - p) ** (g - 1.0) * p * np.log(p))
    return coef[:, None] * (onehot - probs)


def class_weights(labels) -> np.ndarray:
    """Per-sample inverse class frequency, normalised to mean one."""
    labels = np.asarray(labels, dtype=int)
    counts = np.bincount(labels, minlength=2).astype(float)
    w = np.where(counts > 0, len(labels) / (2.0 * np.maximum(counts, 1.0)), 0.0)
    return w[labels]


def balanced_bce(probs, labels, weights=None) -> float:
    """Cross-entropy with each class weighted by its inverse frequency.

    ``probs`` is either the class-1 probability or an ``(n, 2)`` softmax.
    On a full batch this is the mean of the two per-class mean losses.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if probs.ndim == 1:
        probs = np.column_stack([1.0 - probs, probs])
    w = class_weights(labels) if weights is None else np.asarray(weights, dtype=float)
    p = np.maximum(probs[np.arange(len(labels)), labels], PROB_FLOOR)
    return float(np.mean(-w * np.log(p)))


def balanced_accuracy(preds, labels) -> float:
    """Mean of the recalls of the two classes."""
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    recalls = []
    for c in (0, 1):
        mask = labels == c
        if not np.any(mask):
            raise SingleClassBatch("balanced accuracy needs both classes")
        recalls.append(np.mean(preds[mask] == c))
    return float(np.mean(recalls))


def binary_metrics(preds, labels) -> dict:
    """Accuracy, balanced accuracy, precision, recall and F1 (class 1 positive)."""
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    try:
        bal = balanced_accuracy(preds, labels)
    except SingleClassBatch:
        bal = float(np.mean(preds == labels)) if len(labels) else 0.0
    return {
        "accuracy": float(np.mean(preds == labels)) if len(labels) else 0.0,
        "balanced_accuracy": bal,
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }
