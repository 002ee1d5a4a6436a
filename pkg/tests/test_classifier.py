import numpy as np
import pytest

from owrkit.stats import ClassStats, RunningVariance
from owrkit.classifier import (
    UNKNOWN,
    HeuristicThresholdState,
    deepnno_predict,
    deepnno_threshold_update,
    ncm_predict,
    nno_predict,
    predict_with_rejection,
)


def stats_at(centroids, thresholds=None, ids=None):
    ids = list(ids) if ids is not None else list(range(len(centroids)))
    thresholds = thresholds if thresholds is not None else [0.0] * len(centroids)
    return [
        ClassStats(class_id=i, centroid=np.asarray(c, dtype=float), count=1, threshold=t)
        for i, c, t in zip(ids, centroids, thresholds)
    ]


UNIT_VAR = RunningVariance(count=10, mean=0.0, mean_sq=1.0)


def test_ncm_picks_nearest():
    stats = stats_at([[0.0, 0.0], [4.0, 0.0]])
    pred = ncm_predict([1.0, 0.0], stats)
    assert pred.label == 0
    assert not pred.rejected


def test_ncm_tie_breaks_to_lowest_id():
    stats = stats_at([[1.0, 0.0], [-1.0, 0.0]], ids=[7, 3])
    pred = ncm_predict([0.0, 0.0], stats)
    # equidistant; usable stats are sorted by id so argmin lands on 3
    assert pred.label == 3


def test_ncm_ignores_empty_classes():
    stats = stats_at([[0.0, 0.0], [1.0, 0.0]])
    stats.append(ClassStats.empty(99, 2))
    pred = ncm_predict([0.9, 0.0], stats)
    assert pred.label == 1
    assert 99 not in pred.class_ids


def test_rejection_requires_all_radii_exceeded():
    stats = stats_at([[0.0, 0.0], [10.0, 0.0]], thresholds=[1.0, 1.0])
    assert predict_with_rejection([0.5, 0.0], stats, UNIT_VAR).label == 0
    assert predict_with_rejection([5.0, 0.0], stats, UNIT_VAR).label == UNKNOWN


def test_rejection_boundary_accepts():
    # d == delta is an accept, rejection needs strict exceedance everywhere
    stats = stats_at([[0.0, 0.0]], thresholds=[4.0])
    pred = predict_with_rejection([2.0, 0.0], stats, UNIT_VAR)
    assert pred.label == 0 and not pred.rejected


def test_rejection_argmin_spans_all_classes():
    """One far class with a huge radius admits the sample; the nearer class
    without a radius still wins the argmin."""
    stats = stats_at([[0.0, 0.0], [3.0, 0.0]], thresholds=[0.0, 100.0])
    pred = predict_with_rejection([1.0, 0.0], stats, UNIT_VAR)
    assert pred.label == 0
    strict = predict_with_rejection([1.0, 0.0], stats, UNIT_VAR, strict_accept=True)
    assert strict.label == 1


def test_rejection_uses_variance_normalization():
    stats = stats_at([[0.0, 0.0]], thresholds=[1.0])
    wide = RunningVariance(count=10, mean=0.0, mean_sq=25.0)  # sigma^2 = 25
    assert predict_with_rejection([4.0, 0.0], stats, wide).label == 0
    assert predict_with_rejection([4.0, 0.0], stats, UNIT_VAR).label == UNKNOWN


def test_nno_rejects_on_boundary_inclusive():
    stats = stats_at([[0.0, 0.0]])
    assert nno_predict([3.0, 0.0], stats, tau=3.0).label == UNKNOWN
    assert nno_predict([2.9, 0.0], stats, tau=3.0).label == 0


def test_nno_argmax_with_z_scaling():
    stats = stats_at([[0.0, 0.0], [6.0, 0.0]])
    pred = nno_predict([1.0, 0.0], stats, tau=10.0, z=2.0)
    assert pred.label == 0
    assert pred.scores[0] == pytest.approx(2.0 * (1.0 - 1.0 / 10.0))


def test_deepnno_predict_threshold():
    stats = stats_at([[0.0, 0.0]])
    near = deepnno_predict([0.1, 0.0], stats, tau=0.5)
    far = deepnno_predict([3.0, 0.0], stats, tau=0.5)
    assert near.label == 0
    assert far.label == UNKNOWN


def test_deepnno_predict_normalized_variant():
    stats = stats_at([[0.0, 0.0]])
    wide = RunningVariance(count=10, mean=0.0, mean_sq=100.0)
    raw = deepnno_predict([3.0, 0.0], stats, tau=0.5)
    scaled = deepnno_predict([3.0, 0.0], stats, tau=0.5, variance=wide)
    assert raw.label == UNKNOWN and scaled.label == 0


def outcome(pred_label, rejected, true_label, best=None):
    scores = [1.0, 0.0] if (best or pred_label) == 0 else [0.0, 1.0]
    from owrkit.classifier import Prediction

    return Prediction(
        label=UNKNOWN if rejected else pred_label,
        rejected=rejected,
        scores=np.asarray(scores),
        class_ids=(0, 1),
    )


def test_heuristic_update_four_outcomes():
    state = HeuristicThresholdState(tau=0.5, step=0.005)
    # true accept -> up
    assert deepnno_threshold_update(state, outcome(0, False, 0), 0).tau == pytest.approx(0.505)
    # false accept -> down
    assert deepnno_threshold_update(state, outcome(1, False, 1, best=1), 0).tau == pytest.approx(0.495)
    # true reject (argmax wrong) -> up
    assert deepnno_threshold_update(state, outcome(0, True, 0, best=1), 0).tau == pytest.approx(0.505)
    # false reject (argmax would have been right) -> down
    assert deepnno_threshold_update(state, outcome(0, True, 0, best=0), 0).tau == pytest.approx(0.495)


def test_heuristic_update_floors_at_minimum():
    state = HeuristicThresholdState(tau=0.004, step=0.005, minimum=1e-6)
    out = deepnno_threshold_update(state, outcome(0, True, 0, best=0), 0)
    assert out.tau == 1e-6


def test_heuristic_state_validation():
    with pytest.raises(ValueError):
        HeuristicThresholdState(tau=0.0)
    with pytest.raises(ValueError):
        HeuristicThresholdState(tau=0.5, step=0.0)


def test_prediction_scores_align_with_ids():
    stats = stats_at([[0.0, 0.0], [2.0, 0.0]], ids=[4, 9])
    pred = ncm_predict([0.0, 0.0], stats)
    assert pred.class_ids == (4, 9)
    assert pred.scores[0] == pytest.approx(0.0)
    assert pred.scores[1] == pytest.approx(4.0)


def test_no_usable_centroids_raises():
    with pytest.raises(ValueError):
        ncm_predict([0.0], [ClassStats.empty(0, 1)])
