"""Stage 3: K-means clustering of the 6-channel stack into K phases.

The phase model is the joint fixed point of

    c_k = mean of the feature vectors assigned to phase k,
    phase(x) = argmin_k ||feature(x) - c_k||_2  (ties to the lowest k),

found by Lloyd's algorithm with k-means++ seeding and multiple
restarts. Because this stage only ever sees the cached feature stack,
changing K and re-segmenting never re-runs the smoothing stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .image import Image, LabelMap
from .seeds import substream

_MAX_LLOYD = 1000


@dataclass(frozen=True)
class Segmentation:
    """Final clustering: per-pixel labels plus the phase centroids."""

    labels: LabelMap
    centroids: np.ndarray  # (k, d)
    k: int
    objective: float  # within-cluster sum of squared distances

    def effective_k(self) -> int:
        return self.labels.effective_k()


class KMeansResult(NamedTuple):
    centroids: np.ndarray  # (k, d)
    assignment: np.ndarray  # (n,) labels in 1..k
    objective: float


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # one column per centroid, computed as an explicit difference so that
    # exactly equidistant points produce exactly equal entries
    out = np.empty((points.shape[0], centroids.shape[0]))
    for j in range(centroids.shape[0]):
        diff = points - centroids[j]
        out[:, j] = np.einsum("nd,nd->n", diff, diff)
    return out


def _sq_dists_fast(points: np.ndarray, pts_sq: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # expanded form ||x||^2 - 2 x.c + ||c||^2 via one matmul; cheaper than
    # _sq_dists but can break exact ties, so only the Lloyd sweeps use it
    d2 = points @ (-2.0 * centroids.T)
    d2 += pts_sq[:, None]
    d2 += np.einsum("kd,kd->k", centroids, centroids)[None, :]
    return d2


def _means(points: np.ndarray, assign: np.ndarray, k: int) -> tuple:
    counts = np.bincount(assign, minlength=k)
    sums = np.empty((k, points.shape[1]))
    for j in range(points.shape[1]):
        sums[:, j] = np.bincount(assign, weights=points[:, j], minlength=k)
    return sums, counts


def _seed_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.einsum("nd,nd->n", points - centers[0], points - centers[0])
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:  # fewer distinct points seen than desired; fall back to uniform
            idx = rng.integers(n)
        centers[j] = points[idx]
        d2 = np.minimum(d2, np.einsum("nd,nd->n", points - centers[j], points - centers[j]))
    return centers


def _update(points: np.ndarray, centers: np.ndarray, d2: np.ndarray, assign: np.ndarray) -> None:
    k = centers.shape[0]
    sums, counts = _means(points, assign, k)
    live = counts > 0
    centers[live] = sums[live] / counts[live, None]
    if not np.all(live):
        # dead cluster: restart it at the worst-served point
        worst = int(d2[np.arange(points.shape[0]), assign].argmax())
        centers[~live] = points[worst]


def _lloyd(points: np.ndarray, centers: np.ndarray) -> KMeansResult:
    pts_sq = np.einsum("nd,nd->n", points, points)
    assign = None
    for _ in range(_MAX_LLOYD):
        d2 = _sq_dists_fast(points, pts_sq, centers)
        new_assign = d2.argmin(axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        _update(points, centers, d2, assign)
    # polish with exact distances so the fixed point honors the
    # lowest-index tie rule bit for bit
    for _ in range(_MAX_LLOYD):
        d2 = _sq_dists(points, centers)
        new_assign = d2.argmin(axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        _update(points, centers, d2, assign)
    objective = float(d2[np.arange(points.shape[0]), assign].sum())
    return KMeansResult(centers, (assign + 1).astype(np.int32), objective)


def kmeans(points: np.ndarray, k: int, restarts: int = 10, seed: int = 0) -> KMeansResult:
    """Best of `restarts` k-means++/Lloyd runs on (n, d) points.

    Deterministic for a given seed; restarts draw from independent
    substreams, and the lowest objective (first restart on ties) wins.
    Requires 1 <= k <= number of distinct points.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValidationError(f"points must be a nonempty (n, d) array, got shape {points.shape}")
    if k < 1:
        raise ValidationError("k must be >= 1")
    distinct = np.unique(points, axis=0).shape[0]
    if k > distinct:
        raise ValidationError(f"k = {k} exceeds the {distinct} distinct point(s)")
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        rng = substream(seed, "kmeans", r)
        result = _lloyd(points, _seed_plus_plus(points, k, rng))
        if best is None or result.objective < best.objective:
            best = result
    return best


def assign_phases(img: Image, centroids: np.ndarray) -> LabelMap:
    """Nearest-centroid label (1-based) per pixel; ties to the lowest label."""
    centroids = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
    if centroids.shape[0] < 1:
        raise ValidationError("need at least one centroid")
    if centroids.shape[1] != img.channels:
        raise ValidationError(f"centroid dimension {centroids.shape[1]} != channel count {img.channels}")
    pts = img.interleaved().reshape(-1, img.channels)
    labels = _sq_dists(pts, centroids).argmin(axis=1).astype(np.int32) + 1
    return LabelMap(labels.reshape(img.height, img.width), centroids.shape[0])


def render_phases(labels: LabelMap, source: Image) -> Image:
    """Paint each phase with its mean color taken from `source`."""
    if (labels.height, labels.width) != (source.height, source.width):
        raise ValidationError(
            f"label map {labels.labels.shape} does not match image {(source.height, source.width)}"
        )
    out = np.zeros_like(source.data)
    for k in range(1, labels.k + 1):
        sel = labels.labels == k
        if np.any(sel):
            mean = source.data[:, sel].mean(axis=1)
            out[:, sel] = mean[:, None]
    return Image(out)


def segment(img: Image, k: int, restarts: int = 10, seed: int = 0) -> Segmentation:
    """Cluster an image's pixel vectors into k phases (any channel count)."""
    pts = img.interleaved().reshape(-1, img.channels)
    result = kmeans(pts, k, restarts, seed)
    labels = assign_phases(img, result.centroids)
    return Segmentation(labels, result.centroids, k, result.objective)
