"""Incremental open-world training lifecycle.

Each episode runs two stages: stage 1 trains the feature extractor on
mixed current/rehearsal batches while maintaining online class centroids
and the global variance estimate; stage 2 freezes everything and learns
per-class rejection radii on the memory's held-out split by stochastic
subgradient descent on the hinge objective.

The NNO and DeepNNO baselines share the episode loop: NNO only
accumulates centroids over a fixed representation and calibrates a single
radius once, DeepNNO trains the extractor with its per-class BCE and
adapts a scalar score threshold heuristically during training.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np

from .backbone import (
    ExtractorConfig,
    ExtractorState,
    backward,
    forward,
    init_extractor,
    init_optimizer,
    sgd_step,
    snapshot,
)
from .classifier import (
    UNKNOWN,
    HeuristicThresholdState,
    deepnno_predict,
    deepnno_threshold_update,
    ncm_predict,
    nno_predict,
    predict_with_rejection,
)
from .losses import LossOutput, LossWeights, deepnno_bce, md_loss, total_loss
from .memory import (
    ExemplarMemory,
    compose_batch,
    herd_select,
    rebalance,
    round_half_up,
    split_train_heldout,
    store_class,
)
from .stats import (
    ClassStats,
    RunningVariance,
    batch_variance,
    normalized_distance,
    update_centroid,
    update_global_variance,
    usable_stats,
)

METHODS = ("ours", "nno", "deepnno")


@dataclass(frozen=True)
class EpisodeSchedule:
    """Ordered disjoint class sets C_0..C_S plus the unknown pool."""

    class_sets: tuple
    unknown_pool: tuple
    seed: int = 0

    def __post_init__(self):
        seen: set = set()
        for cs in self.class_sets:
            if not cs:
                raise ValueError("empty episode class set")
            overlap = seen & set(cs)
            if overlap:
                raise ValueError(f"classes {sorted(overlap)} appear in multiple episodes")
            seen |= set(cs)
        bad = seen & set(self.unknown_pool)
        if bad:
            raise ValueError(f"classes {sorted(bad)} are both known and unknown")

    @property
    def n_steps(self) -> int:
        return len(self.class_sets)

    def known_through(self, t: int) -> tuple:
        """Sorted K_t, recomputed from the episode sets every call."""
        if not 0 <= t < self.n_steps:
            raise ValueError(f"step {t} outside schedule of {self.n_steps} episodes")
        known: set = set()
        for cs in self.class_sets[: t + 1]:
            known |= set(cs)
        return tuple(sorted(known))


@dataclass(frozen=True)
class TrainConfig:
    epochs_initial: int = 12
    epochs_incremental: int = 4
    learning_rate: float = 0.1
    batch_size: int = 128
    momentum: float = 0.9
    weight_decay: float = 1e-3
    memory_fraction: float = 0.4
    weights: LossWeights = field(default_factory=LossWeights)
    include_gc: bool = True
    threshold_lr: float = 0.01
    threshold_epochs: int = 50
    heldout_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs_initial, self.epochs_incremental, self.batch_size) < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or self.threshold_lr <= 0 or self.threshold_epochs < 1:
            raise ValueError("invalid learning rates or threshold_epochs")
        if not 0.0 <= self.memory_fraction < 1.0:
            raise ValueError("memory_fraction must be in [0, 1)")
        if self.momentum < 0 or self.weight_decay < 0 or self.heldout_jitter < 0:
            raise ValueError("momentum, weight_decay, and jitter must be non-negative")


@dataclass
class ModelState:
    method: str
    extractor: ExtractorState | None
    class_stats: dict
    variance: RunningVariance
    memory: ExemplarMemory
    old_extractor: ExtractorState | None = None
    tau_state: HeuristicThresholdState | None = None
    nno_tau: float | None = None
    nno_z: float = 1.0
    nno_percentile: float = 95.0
    strict_accept: bool = False
    step_index: int = -1

    def features(self, batch) -> np.ndarray:
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        if self.extractor is None:
            return x
        return forward(self.extractor, x)[0]

    def stats_list(self) -> list[ClassStats]:
        return usable_stats(list(self.class_stats.values()))


def init_model(
    input_dim: int,
    feature_dims: tuple = (32, 8),
    method: str = "ours",
    init_seed: int = 0,
    budget: int = 2000,
    heldout_fraction: float = 0.2,
    strict_accept: bool = False,
    activation: str = "relu",
    tau_init: float = 0.5,
    tau_step: float | None = None,
    nno_z: float = 1.0,
    nno_percentile: float = 95.0,
) -> ModelState:
    """Fresh model before episode 0. NNO keeps the raw representation
    (no extractor); the DeepNNO threshold step defaults to 1% of tau_init."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    extractor = None
    if method != "nno":
        extractor = init_extractor(
            ExtractorConfig(
                input_dim=input_dim,
                layer_dims=tuple(feature_dims),
                activation=activation,
                init_seed=init_seed,
            )
        )
    tau_state = None
    if method == "deepnno":
        step = 0.01 * tau_init if tau_step is None else tau_step
        tau_state = HeuristicThresholdState(tau=tau_init, step=step)
    return ModelState(
        method=method,
        extractor=extractor,
        class_stats={},
        variance=RunningVariance(),
        memory=ExemplarMemory(budget=budget, heldout_fraction=heldout_fraction),
        tau_state=tau_state,
        nno_z=nno_z,
        nno_percentile=nno_percentile,
        strict_accept=strict_accept,
    )


def clone_model(model: ModelState) -> ModelState:
    return ModelState(
        method=model.method,
        extractor=None if model.extractor is None else snapshot(model.extractor),
        class_stats={
            cid: dataclasses.replace(s, centroid=s.centroid.copy())
            for cid, s in model.class_stats.items()
        },
        variance=dataclasses.replace(model.variance),
        memory=ExemplarMemory(
            budget=model.memory.budget,
            heldout_fraction=model.memory.heldout_fraction,
            classes={
                cid: dataclasses.replace(
                    c, samples=c.samples.copy(), partitions=c.partitions.copy()
                )
                for cid, c in model.memory.classes.items()
            },
        ),
        old_extractor=None if model.old_extractor is None else snapshot(model.old_extractor),
        tau_state=None if model.tau_state is None else dataclasses.replace(model.tau_state),
        nno_tau=model.nno_tau,
        nno_z=model.nno_z,
        nno_percentile=model.nno_percentile,
        strict_accept=model.strict_accept,
        step_index=model.step_index,
    )


def _absorb_batch(model: ModelState, feats: np.ndarray, labels: np.ndarray) -> None:
    """Online centroid and global-variance updates from one batch."""
    for cid in np.unique(labels):
        cid = int(cid)
        current = model.class_stats.get(cid)
        if current is None:
            current = ClassStats.empty(cid, feats.shape[1])
        model.class_stats[cid] = update_centroid(current, feats[labels == cid])
    model.variance = update_global_variance(model.variance, feats)


def stage1_train_epoch(
    model: ModelState,
    data: tuple,
    config: TrainConfig,
    opt,
    rng: np.random.Generator,
    log: list,
    t: int,
    epoch: int,
):
    """One epoch over the step's data in seeded order, mixed with rehearsal
    draws. Mutates model (extractor, centroids, variance, tau) in place and
    returns the advanced optimizer state."""
    x, y = data
    mem_pool_n = len(model.memory.rehearsal_pool()[0])
    n_mem = round_half_up(config.memory_fraction * config.batch_size) if mem_pool_n else 0
    chunk = max(1, config.batch_size - n_mem)
    order = rng.permutation(len(x))
    for b, start in enumerate(range(0, len(order), chunk)):
        idx = order[start : start + chunk]
        bx, by, _ = compose_batch(
            (x[idx], y[idx]), model.memory, config.batch_size, config.memory_fraction, rng
        )
        record = {"step": t, "epoch": epoch, "batch": b, "size": len(bx)}
        if model.extractor is None:
            feats = bx
            _absorb_batch(model, feats, by)
            log.append(record)
            continue
        feats, cache = forward(model.extractor, bx)
        temp = batch_variance(feats)
        _absorb_batch(model, feats, by)
        stats = model.stats_list()
        if model.method == "ours":
            old_feats = None
            if model.old_extractor is not None and config.weights.distill > 0:
                old_feats = forward(model.old_extractor, bx)[0]
            out = total_loss(
                feats,
                by,
                stats,
                temp,
                old_features=old_feats,
                weights=config.weights,
                include_gc=config.include_gc,
            )
            record.update(out.components)
        else:
            grads_f = np.zeros_like(feats)
            value = 0.0
            for i in range(len(feats)):
                pred = deepnno_predict(feats[i], stats, model.tau_state.tau)
                model.tau_state = deepnno_threshold_update(model.tau_state, pred, int(by[i]))
                sample = deepnno_bce(feats[i], int(by[i]), stats)
                value += sample.value
                grads_f[i] = sample.feature_grads
            out = LossOutput(value=value / len(feats), feature_grads=grads_f / len(feats))
            record["tau"] = model.tau_state.tau
        if not np.isfinite(out.value):
            raise FloatingPointError(
                f"non-finite loss at step {t} epoch {epoch} batch {b}: {out.value}"
            )
        record["loss"] = out.value
        record["batch_sigma2"] = temp
        record["sigma2"] = model.variance.current
        log.append(record)
        grads = backward(model.extractor, cache, out.feature_grads)
        model.extractor, opt = sgd_step(model.extractor, opt, grads)
    return opt


def stage2_learn_thresholds(
    model: ModelState,
    samples_by_class: dict,
    config: TrainConfig,
    rng: np.random.Generator,
    mode: str = "class_specific",
) -> dict:
    """Learn rejection radii on the given per-class sample pools with the
    extractor, centroids, and variance all frozen.

    Radii start at each class's mean own-centroid normalized distance
    (global mode: one shared radius from the pooled mean) and descend the
    hinge subgradient one sample at a time in seeded order, clipped at 0.
    Returns {class_id: radius}.
    """
    if mode not in ("class_specific", "global"):
        raise ValueError(f"unknown threshold mode {mode!r}")
    stats = model.stats_list()
    ids = [s.class_id for s in stats]
    dist_rows, labels, own = [], [], []
    for cid, samples in samples_by_class.items():
        if cid not in ids:
            raise ValueError(f"held-out class {cid} has no usable centroid")
        if len(samples) == 0:
            continue
        feats = model.features(samples)
        if config.heldout_jitter > 0:
            feats = feats + rng.normal(scale=config.heldout_jitter, size=feats.shape)
        for f in feats:
            row = np.array([normalized_distance(f, s.centroid, model.variance) for s in stats])
            dist_rows.append(row)
            labels.append(cid)
            own.append(row[ids.index(cid)])
    if not dist_rows:
        raise ValueError("no samples to learn thresholds from")
    dist_rows = np.array(dist_rows)
    labels = np.array(labels)
    own = np.array(own)
    if mode == "global":
        delta = np.full(len(ids), float(own.mean()))
    else:
        delta = np.array(
            [own[labels == cid].mean() if (labels == cid).any() else 0.0 for cid in ids]
        )
    for _ in range(config.threshold_epochs):
        for i in rng.permutation(len(dist_rows)):
            out = md_loss(dist_rows[i], int(labels[i]), delta, ids)
            if mode == "global":
                shared = max(0.0, float(delta[0]) - config.threshold_lr * out.threshold_grads.sum())
                delta = np.full(len(ids), shared)
            else:
                delta = np.maximum(0.0, delta - config.threshold_lr * out.threshold_grads)
    return {cid: float(delta[k]) for k, cid in enumerate(ids)}


def apply_thresholds(model: ModelState, thresholds: dict) -> None:
    for cid, radius in thresholds.items():
        model.class_stats[cid] = dataclasses.replace(model.class_stats[cid], threshold=radius)


def update_memory(model: ModelState, step_classes, step_data: tuple, known) -> None:
    """Rebalance quotas over K_t, truncate old classes, herd the new ones in."""
    x, y = step_data
    mem, quotas = rebalance(model.memory, known)
    for cid in sorted(int(c) for c in step_classes):
        cls_x = x[y == cid]
        if len(cls_x) == 0:
            continue
        feats = model.features(cls_x)
        sel = herd_select(feats, feats.mean(axis=0), None, quotas[cid])
        mem = store_class(mem, cid, cls_x[sel])
    model.memory = mem


def _nno_calibrate(model: ModelState, data: tuple) -> float:
    """One-time radius: the configured percentile of own-centroid Euclidean
    distances over the initial training data."""
    x, y = data
    feats = model.features(x)
    dists = []
    for f, cid in zip(feats, y):
        mu = model.class_stats[int(cid)].centroid
        diff = f - mu
        dists.append(float(np.sqrt(np.dot(diff, diff))))
    return float(np.percentile(dists, model.nno_percentile))


def run_incremental_step(
    model: ModelState,
    schedule: EpisodeSchedule,
    t: int,
    train_data: tuple,
    config: TrainConfig,
) -> tuple[ModelState, list]:
    """Execute episode t and return (new model, training log records).

    Ours: snapshot the extractor (t >= 1), stage-1 epochs, memory
    rebalance + herding, a fresh held-out split, stage-2 radii. DeepNNO:
    stage-1 epochs with its BCE and threshold heuristic, then memory
    update (no held-out split). NNO: centroid/variance accumulation only,
    radius calibrated once at t = 0.
    """
    if t != model.step_index + 1:
        raise ValueError(f"step {t} out of order, last completed was {model.step_index}")
    x, y = train_data
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty training data")
    step_classes = set(schedule.class_sets[t])
    stray = set(np.unique(y).tolist()) - set(int(c) for c in step_classes)
    if stray:
        raise ValueError(f"labels {sorted(stray)} outside episode {t}'s class set")
    work = clone_model(model)
    known = schedule.known_through(t)
    log: list = []

    if work.method == "nno":
        feats = work.features(x)
        _absorb_batch(work, feats, y)
        if t == 0:
            work.nno_tau = _nno_calibrate(work, (x, y))
        work.step_index = t
        return work, log

    if t >= 1 and work.method == "ours":
        work.old_extractor = snapshot(work.extractor)
    opt = init_optimizer(work.extractor, config.learning_rate, config.momentum, config.weight_decay)
    epochs = config.epochs_initial if t == 0 else config.epochs_incremental
    for epoch in range(epochs):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, schedule.seed, t, epoch]))
        opt = stage1_train_epoch(work, (x, y), config, opt, rng, log, t, epoch)

    update_memory(work, step_classes, (x, y), known)

    if work.method == "ours":
        split_seed = int(np.random.SeedSequence([config.seed, t]).generate_state(1)[0])
        work.memory = split_train_heldout(work.memory, split_seed)
        heldout = work.memory.heldout_by_class()
        for cid, cls in work.memory.classes.items():
            if not (cls.partitions == 1).any():
                warnings.warn(f"class {cid} has no held-out samples, using rehearsal fallback")
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, schedule.seed, t, 10**6]))
        thresholds = stage2_learn_thresholds(work, heldout, config, rng)
        apply_thresholds(work, thresholds)

    work.step_index = t
    return work, log


def predict_closed(model: ModelState, batch) -> np.ndarray:
    """Closed-world labels: nearest centroid, no rejection."""
    feats = model.features(batch)
    return np.array([ncm_predict(f, model.stats_list()).label for f in feats], dtype=np.int64)


def predict_open(model: ModelState, batch) -> np.ndarray:
    """Open-world labels with UNKNOWN (= -1) for rejected samples."""
    feats = model.features(batch)
    stats = model.stats_list()
    out = np.empty(len(feats), dtype=np.int64)
    for i, f in enumerate(feats):
        if model.method == "nno":
            if model.nno_tau is None:
                raise ValueError("NNO radius not calibrated, run step 0 first")
            pred = nno_predict(f, stats, model.nno_tau, model.nno_z)
        elif model.method == "deepnno":
            pred = deepnno_predict(f, stats, model.tau_state.tau)
        else:
            pred = predict_with_rejection(f, stats, model.variance, model.strict_accept)
        out[i] = pred.label
    return out
