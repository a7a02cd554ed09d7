"""Per-class segmentation statistics and fairness diagnostics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import softmax

from .errors import InvalidInputError

PROB_FLOOR = 1e-12


def confusion_matrix(labels, predictions, n_classes: int) -> np.ndarray:
    """Counts with entry (i, j) = pixels of true class i predicted as j."""
    y = np.asarray(labels, dtype=int).reshape(-1)
    p = np.asarray(predictions, dtype=int).reshape(-1)
    if y.shape != p.shape:
        raise InvalidInputError("labels and predictions differ in size")
    if np.any((y < 0) | (y >= n_classes) | (p < 0) | (p >= n_classes)):
        raise InvalidInputError("class index out of range")
    return np.bincount(y * n_classes + p, minlength=n_classes**2).reshape(n_classes, n_classes)


@dataclass(frozen=True)
class IouStats:
    per_class_iou: np.ndarray  # nan where the class has empty union
    miou: float
    iou_std: float


def iou_stats(cm) -> IouStats:
    """Per-class IoU, their mean and population standard deviation.

    Classes whose union is empty are reported as nan and left out of both
    aggregates.
    """
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise InvalidInputError("confusion matrix must be square")
    if np.any(cm < 0):
        raise InvalidInputError("confusion matrix has negative counts")
    cm = cm.astype(np.float64)
    tp = np.diag(cm)
    union = cm.sum(axis=0) + cm.sum(axis=1) - tp
    valid = union > 0
    if not valid.any():
        raise InvalidInputError("confusion matrix is empty")
    iou = np.full(cm.shape[0], np.nan)
    iou[valid] = tp[valid] / union[valid]
    return IouStats(iou, float(np.mean(iou[valid])), float(np.std(iou[valid])))


def fairness_gap(per_class_loss) -> float:
    """Σ over ordered class pairs of |L(c_i) − L(c_j)|."""
    x = np.asarray(per_class_loss, dtype=np.float64).reshape(-1)
    if np.any(x < 0):
        raise InvalidInputError("losses must be nonnegative")
    return float(np.sum(np.abs(x[:, None] - x[None, :])))


def fairness_bound_check(per_class_loss) -> dict:
    """Gap versus ``2C · Σ losses``."""
    x = np.asarray(per_class_loss, dtype=np.float64).reshape(-1)
    lhs = fairness_gap(x)
    rhs = float(2 * x.size * x.sum())
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs + 1e-12)}


def class_balance_weight(p, q=None, floor: float | None = PROB_FLOOR) -> np.ndarray:
    """``log(q_c / p_c)``; ``q`` defaults to the uniform distribution.

    With ``floor=None`` a zero entry of ``p`` is an error instead of being
    raised to the floor.
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError("p must be a probability vector")
    q = np.full(p.size, 1.0 / p.size) if q is None else np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape != p.shape or np.any(q < 0) or abs(q.sum() - 1.0) > 1e-9:
        raise InvalidInputError("q must be a probability vector over the same classes")
    if floor is None:
        if np.any(p == 0) or np.any(q == 0):
            raise InvalidInputError("zero probability without flooring")
    else:
        p, q = np.maximum(p, floor), np.maximum(q, floor)
    return np.log(q) - np.log(p)


def _grid_shifts(radius: int):
    return [(di, dj) for di in range(-radius, radius + 1) for dj in range(-radius, radius + 1) if (di, dj) != (0, 0)]


def structural_consistency_energy(
    colors, predictions, sigma1: float, sigma2: float, window: int = 1, wrap: bool = False
) -> float:
    """Σ over pixels and their window neighbours of the bilateral Gaussian kernel.

    ``colors`` is (H, W, K) and ``predictions`` (H, W, C). ``window`` is the
    neighbourhood radius (1 gives 3×3). With ``wrap`` the grid is treated as a
    torus. The value is summed over ordered pixel pairs and grows with
    smoothness; whether it is added or subtracted in an objective is the
    caller's choice.
    """
    x = np.asarray(colors, dtype=np.float64)
    y = np.asarray(predictions, dtype=np.float64)
    if x.ndim == 2:
        x = x[..., None]
    if y.ndim == 2:
        y = y[..., None]
    if x.shape[:2] != y.shape[:2]:
        raise InvalidInputError("colour and prediction grids differ in shape")
    if sigma1 <= 0 or sigma2 <= 0:
        raise InvalidInputError("kernel widths must be positive")
    h, w = x.shape[:2]
    total = 0.0
    for di, dj in _grid_shifts(window):
        if wrap:
            xn = np.roll(x, (-di, -dj), axis=(0, 1))
            yn = np.roll(y, (-di, -dj), axis=(0, 1))
            xs, ys = x, y
        else:
            r0, r1 = max(0, -di), min(h, h - di)
            c0, c1 = max(0, -dj), min(w, w - dj)
            if r0 >= r1 or c0 >= c1:
                continue
            xs, ys = x[r0:r1, c0:c1], y[r0:r1, c0:c1]
            xn = x[r0 + di : r1 + di, c0 + dj : c1 + dj]
            yn = y[r0 + di : r1 + di, c0 + dj : c1 + dj]
        dc = np.sum((xs - xn) ** 2, axis=-1)
        dp = np.sum((ys - yn) ** 2, axis=-1)
        total += float(np.sum(np.exp(-dc / (2 * sigma1**2) - dp / (2 * sigma2**2))))
    return total


class ClassGradients(NamedTuple):
    mean: np.ndarray  # nan for classes absent from the labels
    total: np.ndarray  # summed magnitude, 0 for absent classes
    count: np.ndarray
    present: np.ndarray


def per_class_gradient_magnitude(logits, labels) -> ClassGradients:
    """Magnitude of ∂CE/∂logit_c on pixels labelled c, i.e. ``1 − softmax_c``.

    ``logits`` is (..., C) and ``labels`` matches its leading shape.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=int)
    if z.shape[:-1] != y.shape:
        raise InvalidInputError("labels must match the logits' leading shape")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite")
    n_classes = z.shape[-1]
    if np.any((y < 0) | (y >= n_classes)):
        raise InvalidInputError("label out of range")
    prob = softmax(z, axis=-1).reshape(-1, n_classes)
    y = y.reshape(-1)
    mag = np.abs(prob[np.arange(y.size), y] - 1.0)
    count = np.bincount(y, minlength=n_classes)
    total = np.bincount(y, weights=mag, minlength=n_classes)
    present = count > 0
    mean = np.full(n_classes, np.nan)
    mean[present] = total[present] / count[present]
    return ClassGradients(mean, total, count, present)


def fairness_report(cm, per_class_loss, class_probs) -> dict:
    stats = iou_stats(cm)
    bound = fairness_bound_check(per_class_loss)
    return {
        "miou": stats.miou,
        "iou_std": stats.iou_std,
        "per_class_iou": [None if np.isnan(v) else float(v) for v in stats.per_class_iou],
        "fairness_gap": bound["lhs"],
        "bound_holds": bound["holds"],
        "balance_weights": [float(v) for v in class_balance_weight(class_probs)],
    }


def fairness_report_json(cm, per_class_loss, class_probs) -> str:
    return json.dumps(fairness_report(cm, per_class_loss, class_probs), sort_keys=True)
