"""Distances, class centroids, and the pooled running feature variance.

Every score in the system is a squared Euclidean distance in feature space,
optionally divided by the global feature variance sigma^2 (a single pooled
scalar over all feature components, kept as an online estimate). Centroids
are exact count-weighted running means.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

# Floor applied to every variance before it is used as a divisor.
VAR_FLOOR = 1e-8


def as_feature_batch(features, dim: int | None = None) -> np.ndarray:
    """Validate and return a (n, d) float64 feature batch.

    A single vector is promoted to a 1-row batch. Raises on non-finite
    entries or a dimension mismatch with `dim`.
    """
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise ValueError(f"expected a vector or (n, d) batch, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("features contain non-finite values")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"expected feature dimension {dim}, got {arr.shape[1]}")
    return arr


def squared_euclidean(a, b) -> float:
    """Sum of squared component differences between two vectors."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    d = a - b
    return float(np.dot(d, d))


@dataclass
class ClassStats:
    """Per-class centroid, absorbed-sample count, and rejection radius.

    `count == 0` marks a class that has no centroid yet and must not be used
    for classification. `threshold` is in squared-distance units after
    division by sigma^2.
    """

    class_id: int
    centroid: np.ndarray
    count: int = 0
    threshold: float = 0.0

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=np.float64)
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")

    @property
    def usable(self) -> bool:
        return self.count > 0

    @classmethod
    def empty(cls, class_id: int, dim: int) -> "ClassStats":
        return cls(class_id=class_id, centroid=np.zeros(dim), count=0)


def update_centroid(stats: ClassStats, batch_features_of_class) -> ClassStats:
    """Fold a batch of same-class features into the running centroid.

    mu <- (count * mu + sum(f_j)) / (count + n). Empty batch is a no-op.
    Returns a new ClassStats; the input is not mutated.
    """
    feats = np.asarray(batch_features_of_class, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[np.newaxis, :]
    n = feats.shape[0]
    if n == 0:
        return replace(stats, centroid=stats.centroid.copy())
    feats = as_feature_batch(feats, dim=stats.centroid.shape[0] if stats.count else None)
    if stats.count and feats.shape[1] != stats.centroid.shape[0]:
        raise ValueError("feature dimension does not match centroid")
    total = stats.count + n
    centroid = (stats.count * stats.centroid + feats.sum(axis=0)) / total
    return replace(stats, centroid=centroid, count=total)


@dataclass
class RunningVariance:
    """Online pooled population variance of every feature component seen.

    Tracks running means of the components and their squares, so the current
    estimate equals the population variance of the concatenation of all
    batches, independent of how they were partitioned (up to fp roundoff).
    """

    count: int = 0
    mean: float = 0.0
    mean_sq: float = 0.0

    @property
    def current(self) -> float:
        """Current sigma^2 estimate, floored at VAR_FLOOR."""
        if self.count == 0:
            return 1.0
        return max(self.mean_sq - self.mean**2, VAR_FLOOR)


def batch_variance(batch) -> float:
    """Population variance of all feature components pooled across a batch."""
    feats = as_feature_batch(batch)
    if feats.size == 0:
        raise ValueError("batch_variance needs at least one sample")
    return max(float(feats.var()), VAR_FLOOR)


def update_global_variance(var: RunningVariance, batch) -> RunningVariance:
    """Fold a batch's components into the pooled running variance estimate."""
    feats = as_feature_batch(batch)
    if feats.size == 0:
        raise ValueError("update_global_variance needs at least one sample")
    flat = feats.ravel()
    m = flat.size
    total = var.count + m
    w_old = var.count / total
    w_new = m / total
    return RunningVariance(
        count=total,
        mean=w_old * var.mean + w_new * float(flat.mean()),
        mean_sq=w_old * var.mean_sq + w_new * float(np.mean(flat**2)),
    )


def normalized_distance(a, b, var: RunningVariance) -> float:
    """Squared Euclidean distance divided by the current sigma^2."""
    return squared_euclidean(a, b) / var.current


def usable_stats(stats: list[ClassStats]) -> list[ClassStats]:
    """Classes with at least one absorbed sample, sorted by class id."""
    return sorted((s for s in stats if s.usable), key=lambda s: s.class_id)
