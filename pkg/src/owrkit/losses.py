"""Training objectives: global clustering (distance softmax cross-entropy),
local clustering (soft nearest neighbour), feature distillation, their
weighted combination, the hinge objective for per-class rejection radii,
and the NNO / DeepNNO baseline scores.

Every loss returns its value together with the analytic gradient with
respect to the features (and, for the threshold hinge, with respect to the
per-class radii). Centroids and the temperature are constants under
differentiation: they are maintained online outside the gradient path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stats import ClassStats, squared_euclidean, usable_stats

# Scores are clamped into [SCORE_CLAMP, 1 - SCORE_CLAMP] before any log.
SCORE_CLAMP = 1e-7
# Below this norm, the distillation gradient is defined as zero.
DS_NORM_GUARD = 1e-12


@dataclass
class LossOutput:
    """A loss value plus the gradients of everything it was evaluated at.

    feature_grads matches the feature argument's shape ((d,) for per-sample
    losses, (n, d) for batch losses); threshold_grads is only set by the
    rejection-radius hinge. components carries per-term diagnostics for the
    combined objective.
    """

    value: float
    feature_grads: np.ndarray | None = None
    threshold_grads: np.ndarray | None = None
    components: dict | None = None


@dataclass(frozen=True)
class LossWeights:
    """Weights of the local-clustering and distillation terms (both 1.0)."""

    snnl: float = 1.0
    distill: float = 1.0

    def __post_init__(self):
        if self.snnl < 0 or self.distill < 0:
            raise ValueError("loss weights must be non-negative")


def class_scores(feature, centroids: list[ClassStats], temperature: float) -> np.ndarray:
    """Softmax over negative scaled squared distances to the class centroids.

    s_k = exp(-d_k / T) / sum_j exp(-d_j / T), computed with the max-shift
    trick. The returned vector aligns with the usable centroids sorted by
    class id and sums to 1.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    stats = usable_stats(centroids)
    if not stats:
        raise ValueError("no usable centroids")
    f = np.asarray(feature, dtype=np.float64).ravel()
    logits = np.array([-squared_euclidean(f, s.centroid) / temperature for s in stats])
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def gc_loss(feature, label: int, centroids: list[ClassStats], temperature: float) -> LossOutput:
    """Global clustering: cross-entropy of the distance softmax at `label`.

    Pulls the feature toward its own centroid and away from the others.
    """
    stats = usable_stats(centroids)
    ids = [s.class_id for s in stats]
    if label not in ids:
        raise ValueError(f"label {label} has no usable centroid")
    f = np.asarray(feature, dtype=np.float64).ravel()
    probs = class_scores(f, stats, temperature)
    idx = ids.index(label)
    # -log softmax via logsumexp; log(probs[idx]) would underflow for far samples
    logits = np.array([-squared_euclidean(f, s.centroid) / temperature for s in stats])
    m = logits.max()
    value = float(m + np.log(np.exp(logits - m).sum()) - logits[idx])
    grad = np.zeros_like(f)
    for k, s in enumerate(stats):
        indicator = 1.0 if k == idx else 0.0
        grad += (2.0 / temperature) * (indicator - probs[k]) * (f - s.centroid)
    return LossOutput(value=value, feature_grads=grad)


def lc_loss(batch_features, labels, anchor_index: int, temperature: float) -> LossOutput:
    """Local clustering (soft nearest neighbour) term of one anchor.

    -log of the probability mass that the anchor's in-batch neighbourhood
    puts on same-class members, with neighbour weights exp(-||f_i-f_j||^2/T).
    Gradients flow to the anchor and to every other batch feature. An anchor
    with no same-class peer contributes 0 and is flagged in components.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    feats = np.asarray(batch_features, dtype=np.float64)
    labels = np.asarray(labels)
    n = feats.shape[0]
    if n < 2:
        raise ValueError("lc_loss needs a batch of at least 2 samples")
    if not 0 <= anchor_index < n:
        raise ValueError("anchor_index out of range")
    i = anchor_index
    others = np.arange(n) != i
    diffs = feats[others] - feats[i]
    dists = np.einsum("ij,ij->i", diffs, diffs)
    peers = labels[others] == labels[i]
    if not peers.any():
        return LossOutput(
            value=0.0, feature_grads=np.zeros_like(feats), components={"skipped": True}
        )
    z = -dists / temperature
    m_all = z.max()
    log_den = m_all + np.log(np.exp(z - m_all).sum())
    zp = z[peers]
    m_p = zp.max()
    log_num = m_p + np.log(np.exp(zp - m_p).sum())
    value = float(log_den - log_num)

    q = np.exp(z - log_den)
    r = np.zeros_like(q)
    r[peers] = np.exp(zp - log_num)
    # d(value)/d(dist_j) = (r_j - q_j) / T, then chain through the distances.
    coef = (r - q) / temperature
    grads = np.zeros_like(feats)
    contrib = coef[:, np.newaxis] * 2.0 * (feats[i] - feats[others])
    grads[i] = contrib.sum(axis=0)
    grads[others] = -contrib
    return LossOutput(value=value, feature_grads=grads, components={"skipped": False})


def ds_loss(feature, old_feature) -> LossOutput:
    """Feature distillation: Euclidean norm (not squared) of the drift from
    the previous extractor's output, with a guarded zero gradient at 0."""
    f = np.asarray(feature, dtype=np.float64).ravel()
    f_old = np.asarray(old_feature, dtype=np.float64).ravel()
    if f.shape != f_old.shape:
        raise ValueError("feature dimensions do not match")
    diff = f - f_old
    value = float(np.sqrt(np.dot(diff, diff)))
    if value < DS_NORM_GUARD:
        return LossOutput(value=value, feature_grads=np.zeros_like(f))
    return LossOutput(value=value, feature_grads=diff / value)


def total_loss(
    batch_features,
    labels,
    centroids: list[ClassStats],
    temperature: float,
    old_features=None,
    weights: LossWeights = LossWeights(),
    include_gc: bool = True,
) -> LossOutput:
    """Batch objective: mean over samples of gc + snnl_weight * lc
    (+ distill_weight * ds when old features are given).

    `old_features` are the previous-step extractor's outputs on the same
    batch; omit them on the initial step. `include_gc` exists for the
    losses ablation only.
    """
    feats = np.asarray(batch_features, dtype=np.float64)
    labels = np.asarray(labels)
    n = feats.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if old_features is not None:
        old = np.asarray(old_features, dtype=np.float64)
        if old.shape != feats.shape:
            raise ValueError("old_features shape does not match batch_features")
    grads = np.zeros_like(feats)
    gc_total = lc_total = ds_total = 0.0
    n_skipped = 0
    for i in range(n):
        if include_gc:
            out = gc_loss(feats[i], int(labels[i]), centroids, temperature)
            gc_total += out.value
            grads[i] += out.feature_grads
        if weights.snnl > 0 and n >= 2:
            out = lc_loss(feats, labels, i, temperature)
            lc_total += out.value
            grads += weights.snnl * out.feature_grads
            if out.components and out.components.get("skipped"):
                n_skipped += 1
        if old_features is not None and weights.distill > 0:
            out = ds_loss(feats[i], old[i])
            ds_total += out.value
            grads[i] += weights.distill * out.feature_grads
    value = (gc_total + weights.snnl * lc_total + weights.distill * ds_total) / n
    return LossOutput(
        value=value,
        feature_grads=grads / n,
        components={
            "gc": gc_total / n,
            "lc": lc_total / n,
            "ds": ds_total / n,
            "lc_skipped": n_skipped,
        },
    )


def md_loss(distances, label: int, thresholds, class_ids) -> LossOutput:
    """Rejection-radius hinge for one sample's per-class normalized distances.

    The in-class term max(0, d_c - delta_c) grows the own radius past
    outliers; each out-of-class term max(0, delta_k - d_k) shrinks radii
    that admit intruders. threshold_grads holds the subgradient wrt the
    radii (-1 / +1 inside an active hinge, 0 at the corner).
    """
    d = np.asarray(distances, dtype=np.float64).ravel()
    delta = np.asarray(thresholds, dtype=np.float64).ravel()
    ids = list(class_ids)
    if not (len(d) == len(delta) == len(ids)):
        raise ValueError("distances, thresholds, and class_ids must align")
    if np.any(delta < 0):
        raise ValueError("thresholds must be non-negative")
    if label not in ids:
        raise ValueError(f"label {label} not among class_ids")
    own = ids.index(label)
    value = 0.0
    grad = np.zeros_like(delta)
    for k in range(len(ids)):
        if k == own:
            if d[k] > delta[k]:
                value += d[k] - delta[k]
                grad[k] -= 1.0
        else:
            if delta[k] > d[k]:
                value += delta[k] - d[k]
                grad[k] += 1.0
    return LossOutput(value=float(value), threshold_grads=grad)


def nno_score(feature, centroid, tau: float, z: float = 1.0, squared: bool = False) -> float:
    """Linear acceptance score Z * (1 - d/tau); 0 is the rejection boundary.

    d is the Euclidean distance by default (squared=True switches the
    convention).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    d2 = squared_euclidean(feature, centroid)
    d = d2 if squared else float(np.sqrt(d2))
    return z * (1.0 - d / tau)


def deepnno_score(feature, centroid) -> float:
    """exp(-||f - mu||^2 / 2), in (0, 1], 1 exactly at the centroid."""
    return float(np.exp(-0.5 * squared_euclidean(feature, centroid)))


def deepnno_bce(feature, label: int, centroids: list[ClassStats]) -> LossOutput:
    """Binary cross-entropy over per-class exp(-d/2) scores.

    The label's score is pushed to 1, every other score to 0. Scores are
    clamped away from {0, 1} before the logs; clamped terms contribute no
    gradient.
    """
    stats = usable_stats(centroids)
    ids = [s.class_id for s in stats]
    if label not in ids:
        raise ValueError(f"label {label} has no usable centroid")
    f = np.asarray(feature, dtype=np.float64).ravel()
    value = 0.0
    grad = np.zeros_like(f)
    for s in stats:
        raw = deepnno_score(f, s.centroid)
        clamped = min(max(raw, SCORE_CLAMP), 1.0 - SCORE_CLAMP)
        in_range = SCORE_CLAMP <= raw <= 1.0 - SCORE_CLAMP
        if s.class_id == label:
            value -= float(np.log(clamped))
            if in_range:
                # d(-log s)/d(dist) = 1/2; chain rule through dist.
                grad += f - s.centroid
        else:
            value -= float(np.log(1.0 - clamped))
            if in_range:
                grad += -raw / (1.0 - raw) * (f - s.centroid)
    return LossOutput(value=value, feature_grads=grad)
