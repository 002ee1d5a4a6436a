"""Metric definitions checked on hand-built models with identity features."""

import numpy as np
import pytest

from owrkit.stats import ClassStats, RunningVariance
from owrkit.memory import ExemplarMemory
from owrkit.protocol import ModelState
from owrkit.evaluation import (
    build_report,
    compose_owr,
    eval_closed_no_rejection,
    eval_closed_with_rejection,
    eval_open_set,
    rejection_rate_diff,
)


def identity_model(centroids, thresholds, ids=None):
    """No extractor: raw inputs are the features. Unit variance."""
    ids = list(ids) if ids is not None else list(range(len(centroids)))
    stats = {
        i: ClassStats(class_id=i, centroid=np.asarray(c, dtype=float), count=1, threshold=t)
        for i, c, t in zip(ids, centroids, thresholds)
    }
    return ModelState(
        method="ours",
        extractor=None,
        class_stats=stats,
        variance=RunningVariance(count=1, mean=0.0, mean_sq=1.0),
        memory=ExemplarMemory(budget=10),
    )


# two classes at x=0 and x=4, radius 1 each
MODEL = identity_model([[0.0], [4.0]], [1.0, 1.0])


def test_closed_accuracy_fixture():
    x = np.array([[0.1], [3.9], [1.7], [4.2]])
    y = np.array([0, 1, 1, 0])  # last two labelled wrong on purpose
    assert eval_closed_no_rejection(MODEL, (x, y)) == pytest.approx(0.5)


def test_closed_with_rejection_counts_rejects_as_errors():
    x = np.array([[0.1], [2.0]])  # second is outside both radii
    y = np.array([0, 0])
    assert eval_closed_with_rejection(MODEL, (x, y)) == pytest.approx(0.5)


def test_open_set_accuracy_fixture():
    unknown = np.array([[2.0], [-3.0], [6.5], [0.5]])  # last lands inside class 0
    assert eval_open_set(MODEL, unknown) == pytest.approx(0.75)


def test_compose_owr_fixture():
    owr, owr_h = compose_owr(0.8, 0.6)
    assert owr == pytest.approx(0.7, abs=1e-12)
    assert owr_h == pytest.approx(2 * 0.8 * 0.6 / 1.4, abs=1e-12)


def test_compose_owr_reject_everything_pathology():
    # cw 0, open 1: arithmetic mean hides the collapse, harmonic does not
    owr, owr_h = compose_owr(0.0, 1.0)
    assert owr == 0.5
    assert owr_h == 0.0


def test_compose_owr_at_origin():
    assert compose_owr(0.0, 0.0) == (0.0, 0.0)


def test_compose_owr_range_checks():
    with pytest.raises(ValueError):
        compose_owr(1.1, 0.5)
    with pytest.raises(ValueError):
        compose_owr(0.5, -0.01)


@pytest.mark.parametrize("seed", range(25))
def test_harmonic_never_exceeds_arithmetic(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0, 1, size=2)
    owr, owr_h = compose_owr(float(a), float(b))
    assert owr_h <= owr + 1e-15


def test_rejection_rate_over_correct_knowns_only():
    """x=1.7 is misclassified (nearest is 0, labelled 1) and must not enter
    the rate denominator even though it gets rejected."""
    x = np.array([[0.1], [1.7], [3.9]])
    y = np.array([0, 1, 1])
    unknown = np.array([[2.0], [6.0]])
    rate, open_acc, diff = rejection_rate_diff(MODEL, (x, y), unknown)
    assert rate == pytest.approx(0.0)
    assert open_acc == pytest.approx(1.0)
    assert diff == pytest.approx(1.0)


def test_rejection_rate_counts_costly_rejects():
    model = identity_model([[0.0], [4.0]], [0.0, 1.0])  # class 0 radius zero
    x = np.array([[0.5], [4.1]])
    y = np.array([0, 1])
    rate, open_acc, diff = rejection_rate_diff(model, (x, y), np.array([[2.0]]))
    # both classified correctly closed-world; the class-0 sample is rejected
    assert rate == pytest.approx(0.5)
    assert diff == pytest.approx(open_acc - 0.5)


def test_rejection_rate_none_when_nothing_correct():
    x = np.array([[0.1]])
    y = np.array([1])
    rate, open_acc, diff = rejection_rate_diff(MODEL, (x, y), np.array([[9.0]]))
    assert rate is None and diff is None
    assert open_acc == pytest.approx(1.0)


def test_empty_sets_raise():
    with pytest.raises(ValueError):
        eval_closed_no_rejection(MODEL, (np.empty((0, 1)), np.empty(0)))
    with pytest.raises(ValueError):
        eval_open_set(MODEL, np.empty((0, 1)))


def test_metrics_are_permutation_invariant():
    rng = np.random.default_rng(3)
    x = rng.uniform(-2, 8, size=(40, 1))
    y = rng.integers(0, 2, size=40)
    perm = rng.permutation(40)
    assert eval_closed_no_rejection(MODEL, (x, y)) == eval_closed_no_rejection(
        MODEL, (x[perm], y[perm])
    )
    assert eval_closed_with_rejection(MODEL, (x, y)) == eval_closed_with_rejection(
        MODEL, (x[perm], y[perm])
    )


def test_build_report_wires_fields():
    x = np.array([[0.1], [3.9]])
    y = np.array([0, 1])
    unknown = np.array([[2.0], [7.0]])
    report = build_report(MODEL, (x, y), unknown, step=3)
    assert report.step == 3
    assert report.cw_no_rej == pytest.approx(1.0)
    assert report.cw_rej == pytest.approx(1.0)
    assert report.open_set_acc == pytest.approx(1.0)
    owr, owr_h = compose_owr(report.cw_rej, report.open_set_acc)
    assert report.owr == owr and report.owr_h == owr_h
    d = report.as_dict()
    assert set(d) == {
        "step", "cw_no_rej", "cw_rej", "open_set_acc", "owr", "owr_h", "known_rejection_rate",
    }


def test_binomial_consistency_of_open_set_rate():
    """Random far/near unknowns: the measured rate should sit within 3 sigma
    of the construction probability."""
    rng = np.random.default_rng(8)
    n = 400
    p = 0.7
    far = rng.uniform(8.0, 12.0, size=(n, 1))  # always rejected
    near = np.zeros((n, 1))  # always accepted by class 0
    pick = rng.uniform(size=n) < p
    unknown = np.where(pick[:, None], far, near)
    rate = eval_open_set(MODEL, unknown)
    sigma = np.sqrt(p * (1 - p) / n)
    assert abs(rate - pick.mean()) < 1e-12
    assert abs(rate - p) < 3 * sigma
