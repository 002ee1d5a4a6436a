"""Open-world metrics: closed world with and without rejection, open-set
rejection accuracy, their arithmetic (OWR) and harmonic (OWR-H) means, and
the rejection-rate difference diagnostic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import UNKNOWN
from .protocol import ModelState, predict_closed, predict_open


@dataclass(frozen=True)
class MetricsReport:
    """Per-step metric bundle. known_rejection_rate is None when no known
    test sample was classified correctly (the rate is then undefined)."""

    step: int
    cw_no_rej: float
    cw_rej: float
    open_set_acc: float
    owr: float
    owr_h: float
    known_rejection_rate: float | None

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "cw_no_rej": self.cw_no_rej,
            "cw_rej": self.cw_rej,
            "open_set_acc": self.open_set_acc,
            "owr": self.owr,
            "owr_h": self.owr_h,
            "known_rejection_rate": self.known_rejection_rate,
        }


def _check_known(known_test):
    x, y = known_test
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty known test set")
    return x, y


def eval_closed_no_rejection(model: ModelState, known_test) -> float:
    """Accuracy of the pure nearest-centroid rule on known classes."""
    x, y = _check_known(known_test)
    return float(np.mean(predict_closed(model, x) == y))


def eval_closed_with_rejection(model: ModelState, known_test) -> float:
    """Accuracy on known classes when rejection is possible; a rejected
    known sample counts as an error."""
    x, y = _check_known(known_test)
    return float(np.mean(predict_open(model, x) == y))


def eval_open_set(model: ModelState, unknown_test) -> float:
    """Fraction of unknown-class samples rejected as UNKNOWN."""
    x = np.asarray(unknown_test, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("empty unknown test set")
    return float(np.mean(predict_open(model, x) == UNKNOWN))


def compose_owr(cw_rej: float, open_set_acc: float) -> tuple[float, float]:
    """(arithmetic mean, harmonic mean); the harmonic mean is defined as 0
    at (0, 0). Rejecting everything scores owr 0.5 but owr_h 0."""
    for v in (cw_rej, open_set_acc):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"accuracy {v} outside [0, 1]")
    owr = (cw_rej + open_set_acc) / 2.0
    denom = cw_rej + open_set_acc
    owr_h = 0.0 if denom == 0.0 else 2.0 * cw_rej * open_set_acc / denom
    return owr, owr_h


def rejection_rate_diff(model: ModelState, known_test, unknown_test):
    """(known_rejection_rate, open_set_acc, diff).

    The known rejection rate is measured only over known samples the
    closed-world rule classifies correctly: it isolates rejections that
    cost accuracy. diff = open_set_acc - rate; the ideal rejection strategy
    drives it toward 1. rate and diff are None when no known sample is
    classified correctly.
    """
    x, y = _check_known(known_test)
    open_acc = eval_open_set(model, unknown_test)
    correct = predict_closed(model, x) == y
    if not correct.any():
        return None, open_acc, None
    rejected = predict_open(model, x[correct]) == UNKNOWN
    rate = float(np.mean(rejected))
    return rate, open_acc, open_acc - rate


def build_report(model: ModelState, known_test, unknown_test, step: int) -> MetricsReport:
    """All metrics for one episode's test split."""
    cw_no = eval_closed_no_rejection(model, known_test)
    cw_rej = eval_closed_with_rejection(model, known_test)
    open_acc = eval_open_set(model, unknown_test)
    owr, owr_h = compose_owr(cw_rej, open_acc)
    rate, _, _ = rejection_rate_diff(model, known_test, unknown_test)
    return MetricsReport(
        step=step,
        cw_no_rej=cw_no,
        cw_rej=cw_rej,
        open_set_acc=open_acc,
        owr=owr,
        owr_h=owr_h,
        known_rejection_rate=rate,
    )
