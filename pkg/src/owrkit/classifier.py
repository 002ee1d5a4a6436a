"""Nearest-centroid decisions with open-set rejection.

Covers the closed-set NCM rule, rejection via per-class learned radii on
variance-normalized distances, and the NNO / DeepNNO baseline decision
rules with their heuristic threshold update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import deepnno_score, nno_score
from .stats import ClassStats, RunningVariance, normalized_distance, squared_euclidean, usable_stats

# Sentinel label for rejected samples. Never a valid class id.
UNKNOWN = -1


@dataclass(frozen=True)
class Prediction:
    """A decision for one sample: the label (UNKNOWN if rejected), whether
    it was rejected, and the per-class scores or distances that produced it
    (aligned with usable class ids sorted ascending)."""

    label: int
    rejected: bool
    scores: np.ndarray
    class_ids: tuple


def _prepare(centroids: list[ClassStats]) -> list[ClassStats]:
    stats = usable_stats(centroids)
    if not stats:
        raise ValueError("no usable centroids")
    return stats


def ncm_predict(feature, centroids: list[ClassStats]) -> Prediction:
    """Closed-set nearest class mean: argmin squared distance, ties to the
    lowest class id (np.argmin keeps the first of the sorted ids)."""
    stats = _prepare(centroids)
    f = np.asarray(feature, dtype=np.float64).ravel()
    dists = np.array([squared_euclidean(f, s.centroid) for s in stats])
    idx = int(np.argmin(dists))
    return Prediction(
        label=stats[idx].class_id,
        rejected=False,
        scores=dists,
        class_ids=tuple(s.class_id for s in stats),
    )


def predict_with_rejection(
    feature,
    centroids: list[ClassStats],
    variance: RunningVariance,
    strict_accept: bool = False,
) -> Prediction:
    """Open-set rule on variance-normalized squared distances.

    Reject as UNKNOWN iff every class has d_c > delta_c. Otherwise predict
    the argmin distance over all classes; at least one radius then admits
    the sample, but the argmin itself need not be the admitting class.
    strict_accept restricts the argmin to admitting classes instead.
    """
    stats = _prepare(centroids)
    f = np.asarray(feature, dtype=np.float64).ravel()
    dists = np.array([normalized_distance(f, s.centroid, variance) for s in stats])
    ids = tuple(s.class_id for s in stats)
    accepts = np.array([dists[k] <= stats[k].threshold for k in range(len(stats))])
    if not accepts.any():
        return Prediction(label=UNKNOWN, rejected=True, scores=dists, class_ids=ids)
    if strict_accept:
        masked = np.where(accepts, dists, np.inf)
        idx = int(np.argmin(masked))
    else:
        idx = int(np.argmin(dists))
    return Prediction(label=ids[idx], rejected=False, scores=dists, class_ids=ids)


def nno_predict(feature, centroids: list[ClassStats], tau: float, z: float = 1.0) -> Prediction:
    """NNO decision: per-class scores Z*(1 - d/tau); reject iff all scores
    are <= 0 (the boundary itself rejects), else argmax with ties to the
    lowest class id."""
    stats = _prepare(centroids)
    f = np.asarray(feature, dtype=np.float64).ravel()
    scores = np.array([nno_score(f, s.centroid, tau, z) for s in stats])
    ids = tuple(s.class_id for s in stats)
    if np.all(scores <= 0.0):
        return Prediction(label=UNKNOWN, rejected=True, scores=scores, class_ids=ids)
    idx = int(np.argmax(scores))
    return Prediction(label=ids[idx], rejected=False, scores=scores, class_ids=ids)


@dataclass
class HeuristicThresholdState:
    """DeepNNO's scalar acceptance threshold and its update step size.

    The threshold moves by a fixed step after every training sample:
    up when the decision at the current threshold was consistent with the
    label (true accept or true reject), down otherwise, floored at the
    minimum so it never collapses to zero.
    """

    tau: float = 0.5
    step: float = field(default=0.005)
    minimum: float = 1e-6

    def __post_init__(self):
        if self.tau <= 0 or self.step <= 0:
            raise ValueError("tau and step must be positive")


def deepnno_predict(
    feature,
    centroids: list[ClassStats],
    tau: float,
    variance: RunningVariance | None = None,
) -> Prediction:
    """DeepNNO decision over scores exp(-d/2): reject iff all scores are
    <= tau, else argmax. Passing `variance` scores the variance-normalized
    distances instead (the rescaled-baseline ablation)."""
    stats = _prepare(centroids)
    f = np.asarray(feature, dtype=np.float64).ravel()
    if variance is None:
        scores = np.array([deepnno_score(f, s.centroid) for s in stats])
    else:
        scores = np.array(
            [np.exp(-0.5 * normalized_distance(f, s.centroid, variance)) for s in stats]
        )
    ids = tuple(s.class_id for s in stats)
    if np.all(scores <= tau):
        return Prediction(label=UNKNOWN, rejected=True, scores=scores, class_ids=ids)
    idx = int(np.argmax(scores))
    return Prediction(label=ids[idx], rejected=False, scores=scores, class_ids=ids)


def deepnno_threshold_update(
    state: HeuristicThresholdState, prediction: Prediction, label: int
) -> HeuristicThresholdState:
    """One heuristic step of the DeepNNO threshold on a labelled sample.

    Correct accepts and correct rejects raise tau (tighten); false accepts
    and false rejects lower it (loosen), floored at state.minimum. A reject
    counts as correct only when the argmax score class is also wrong: a
    rejected sample whose best class matched the label is a miss.
    """
    best = prediction.class_ids[int(np.argmax(prediction.scores))]
    would_be_correct = best == label
    if prediction.rejected:
        consistent = not would_be_correct
    else:
        consistent = prediction.label == label
    if consistent:
        tau = state.tau + state.step
    else:
        tau = max(state.minimum, state.tau - state.step)
    return HeuristicThresholdState(tau=tau, step=state.step, minimum=state.minimum)
