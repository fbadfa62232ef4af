"""Evaluation: label-permutation-invariant pixel accuracy, plus PSNR.

Cluster indices carry no meaning, so a predicted segmentation is scored
after the label bijection that maximizes agreement with the ground
truth: exhaustive search over permutations up to K = 8, the Hungarian
assignment solver beyond.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError
from .image import Image, LabelMap


@dataclass(frozen=True)
class AccuracyReport:
    accuracy: float  # matched correct pixels / total pixels
    matching: dict  # predicted label -> ground-truth label (bijection)
    per_phase: dict  # ground-truth label -> fraction of its pixels correct


def _confusion(pred: LabelMap, truth: LabelMap, k: int) -> np.ndarray:
    flat = (pred.labels.ravel().astype(np.int64) - 1) * k + (truth.labels.ravel() - 1)
    return np.bincount(flat, minlength=k * k).reshape(k, k)


def _best_bijection(counts: np.ndarray) -> tuple:
    k = counts.shape[0]
    if k <= 8:
        best_perm, best_hits = None, -1
        for perm in permutations(range(k)):
            hits = sum(counts[i, perm[i]] for i in range(k))
            if hits > best_hits:
                best_perm, best_hits = perm, hits
        return list(best_perm), int(best_hits)
    rows, cols = linear_sum_assignment(-counts)
    perm = [0] * k
    for r, c in zip(rows, cols):
        perm[r] = int(c)
    return perm, int(counts[rows, cols].sum())


def accuracy(pred: LabelMap, truth: LabelMap) -> AccuracyReport:
    """Correct-pixel fraction under the best predicted->truth relabeling."""
    if pred.labels.shape != truth.labels.shape:
        raise ValidationError(f"label map shapes differ: {pred.labels.shape} vs {truth.labels.shape}")
    k = max(pred.k, truth.k)
    counts = _confusion(pred, truth, k)
    perm, hits = _best_bijection(counts)
    total = pred.labels.size
    matching = {i + 1: perm[i] + 1 for i in range(k)}
    remapped = np.asarray(perm, dtype=np.int32)[pred.labels - 1] + 1
    per_phase = {}
    for t in range(1, truth.k + 1):
        sel = truth.labels == t
        n = int(sel.sum())
        per_phase[t] = float((remapped[sel] == t).sum() / n) if n else math.nan
    return AccuracyReport(hits / total, matching, per_phase)


def psnr(a: Image, b: Image) -> float:
    """10 log10(1 / MSE) for images in [0, 1]; inf for identical inputs."""
    if a.shape != b.shape:
        raise ValidationError(f"image shapes differ: {a.shape} vs {b.shape}")
    for img, name in ((a, "first"), (b, "second")):
        lo, hi = float(img.data.min()), float(img.data.max())
        if lo < 0.0 or hi > 1.0:
            raise ValidationError(f"{name} image outside [0, 1] (range [{lo:.4g}, {hi:.4g}])")
    mse = float(np.mean((a.data - b.data) ** 2))
    return math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)
