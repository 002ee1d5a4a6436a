"""sklearn-style wrappers: fit starts episode 0, each partial_fit call is
one incremental episode with new classes, predict returns open-world
labels (-1 for rejected samples), transform exposes the learned features.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .losses import LossWeights
from .protocol import (
    EpisodeSchedule,
    TrainConfig,
    init_model,
    predict_closed,
    predict_open,
    run_incremental_step,
)


class _RecognizerBase(BaseEstimator, ClassifierMixin, TransformerMixin):
    """Shared episode plumbing. Subclasses define __init__ params and
    _build_model; sklearn introspection requires the explicit signatures."""

    _method = "ours"

    def _train_config(self) -> TrainConfig:
        raise NotImplementedError

    def _build_model(self, input_dim: int):
        raise NotImplementedError

    def _check_Xy(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        y = np.asarray(y, dtype=np.int64)
        if np.any(y < 0):
            raise ValueError("class labels must be non-negative integers")
        return X, y

    def fit(self, X, y):
        """Train episode 0 on all classes present in y."""
        X, y = self._check_Xy(X, y)
        self.n_features_in_ = X.shape[1]
        self._episodes = [tuple(sorted(np.unique(y).tolist()))]
        self.model_ = self._build_model(X.shape[1])
        self._advance(X, y)
        return self

    def partial_fit(self, X, y):
        """Add one episode. The classes in y must be new; the first call
        (without a prior fit) behaves like fit."""
        if not hasattr(self, "model_"):
            return self.fit(X, y)
        X, y = self._check_Xy(X, y)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, estimator was fitted with {self.n_features_in_}"
            )
        self._episodes.append(tuple(sorted(np.unique(y).tolist())))
        self._advance(X, y)
        return self

    def _advance(self, X, y):
        schedule = EpisodeSchedule(
            class_sets=tuple(self._episodes), unknown_pool=(), seed=self.random_state
        )
        t = len(self._episodes) - 1
        self.model_, _ = run_incremental_step(self.model_, schedule, t, (X, y), self._train_config())
        self.classes_ = np.array(schedule.known_through(t), dtype=np.int64)

    def predict(self, X):
        """Open-world labels; -1 marks rejected (unknown) samples."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return predict_open(self.model_, X)

    def predict_closed(self, X):
        """Closed-world nearest-centroid labels, rejection disabled."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return predict_closed(self.model_, X)

    def transform(self, X):
        """Extractor features for X."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return self.model_.features(X)


class OpenWorldRecognizer(_RecognizerBase):
    """Metric-learned NCM with per-class rejection radii and rehearsal."""

    _method = "ours"

    def __init__(
        self,
        feature_dims=(32, 8),
        epochs_initial=12,
        epochs_incremental=4,
        learning_rate=0.1,
        batch_size=128,
        momentum=0.9,
        weight_decay=1e-3,
        snnl_weight=1.0,
        distill_weight=1.0,
        threshold_lr=0.01,
        threshold_epochs=50,
        memory_budget=2000,
        memory_fraction=0.4,
        heldout_fraction=0.2,
        strict_accept=False,
        random_state=0,
    ):
        self.feature_dims = feature_dims
        self.epochs_initial = epochs_initial
        self.epochs_incremental = epochs_incremental
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.snnl_weight = snnl_weight
        self.distill_weight = distill_weight
        self.threshold_lr = threshold_lr
        self.threshold_epochs = threshold_epochs
        self.memory_budget = memory_budget
        self.memory_fraction = memory_fraction
        self.heldout_fraction = heldout_fraction
        self.strict_accept = strict_accept
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs_initial=self.epochs_initial,
            epochs_incremental=self.epochs_incremental,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            memory_fraction=self.memory_fraction,
            weights=LossWeights(snnl=self.snnl_weight, distill=self.distill_weight),
            threshold_lr=self.threshold_lr,
            threshold_epochs=self.threshold_epochs,
            seed=self.random_state,
        )

    def _build_model(self, input_dim: int):
        return init_model(
            input_dim,
            feature_dims=tuple(self.feature_dims),
            method="ours",
            init_seed=self.random_state,
            budget=self.memory_budget,
            heldout_fraction=self.heldout_fraction,
            strict_accept=self.strict_accept,
        )


class NNORecognizer(_RecognizerBase):
    """Nearest non-outlier on the raw representation: a single radius
    calibrated on the initial episode, centroids accumulated after."""

    _method = "nno"

    def __init__(self, z=1.0, percentile=95.0, random_state=0):
        self.z = z
        self.percentile = percentile
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.random_state)

    def _build_model(self, input_dim: int):
        return init_model(
            input_dim,
            method="nno",
            init_seed=self.random_state,
            nno_z=self.z,
            nno_percentile=self.percentile,
        )

    def transform(self, X):
        check_is_fitted(self, "model_")
        return check_array(X, dtype=np.float64)


class DeepNNORecognizer(_RecognizerBase):
    """End-to-end trained NNO variant: per-class BCE on exp(-d/2) scores
    and a heuristically adapted scalar threshold."""

    _method = "deepnno"

    def __init__(
        self,
        feature_dims=(32, 8),
        epochs_initial=12,
        epochs_incremental=4,
        learning_rate=0.1,
        batch_size=128,
        momentum=0.9,
        weight_decay=1e-3,
        memory_budget=2000,
        memory_fraction=0.4,
        tau_init=0.5,
        tau_step=None,
        random_state=0,
    ):
        self.feature_dims = feature_dims
        self.epochs_initial = epochs_initial
        self.epochs_incremental = epochs_incremental
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.memory_budget = memory_budget
        self.memory_fraction = memory_fraction
        self.tau_init = tau_init
        self.tau_step = tau_step
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs_initial=self.epochs_initial,
            epochs_incremental=self.epochs_incremental,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            memory_fraction=self.memory_fraction,
            seed=self.random_state,
        )

    def _build_model(self, input_dim: int):
        return init_model(
            input_dim,
            feature_dims=tuple(self.feature_dims),
            method="deepnno",
            init_seed=self.random_state,
            budget=self.memory_budget,
            tau_init=self.tau_init,
            tau_step=self.tau_step,
        )
