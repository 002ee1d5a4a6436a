"""Fixed-budget exemplar memory for rehearsal.

Stores raw inputs per class in herding order (features are recomputed as
the extractor evolves), enforces per-class quotas under a global budget,
tags a held-out fraction per step for threshold learning, and composes
mixed rehearsal batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .backbone import ExtractorState, forward

REHEARSAL = 0
HELDOUT = 1


def round_half_up(x: float) -> int:
    """round(51.2) -> 51, round(2.5) -> 3. Not banker's rounding."""
    return int(math.floor(x + 0.5))


@dataclass
class StoredClass:
    """One class's exemplars in herding (selection) order, plus the
    per-sample partition tag. Tags are reassigned by split_train_heldout
    once per incremental step and are stable until the next split."""

    class_id: int
    samples: np.ndarray
    partitions: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.partitions = np.asarray(self.partitions, dtype=np.int64)
        if self.samples.ndim != 2:
            raise ValueError("stored samples must be a 2D array")
        if len(self.partitions) != len(self.samples):
            raise ValueError("partition tags must align with samples")

    @property
    def count(self) -> int:
        return len(self.samples)


@dataclass
class ExemplarMemory:
    budget: int = 2000
    heldout_fraction: float = 0.2
    classes: dict[int, StoredClass] = field(default_factory=dict)

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be positive")
        if not 0.0 < self.heldout_fraction < 1.0:
            raise ValueError("heldout_fraction must be in (0, 1)")

    def total_stored(self) -> int:
        return sum(c.count for c in self.classes.values())

    def class_ids(self) -> list[int]:
        return sorted(self.classes)

    def _pool(self, tag: int) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = [], []
        for cid in self.class_ids():
            cls = self.classes[cid]
            mask = cls.partitions == tag
            if mask.any():
                xs.append(cls.samples[mask])
                ys.append(np.full(int(mask.sum()), cid, dtype=np.int64))
        if not xs:
            dim = next(iter(self.classes.values())).samples.shape[1] if self.classes else 0
            return np.empty((0, dim)), np.empty(0, dtype=np.int64)
        return np.concatenate(xs), np.concatenate(ys)

    def rehearsal_pool(self) -> tuple[np.ndarray, np.ndarray]:
        return self._pool(REHEARSAL)

    def heldout_by_class(self) -> dict[int, np.ndarray]:
        """Held-out samples per class; falls back to a class's rehearsal
        samples when rounding left it without any (caller should warn)."""
        out = {}
        for cid in self.class_ids():
            cls = self.classes[cid]
            mask = cls.partitions == HELDOUT
            out[cid] = cls.samples[mask] if mask.any() else cls.samples
        return out


def store_class(memory: ExemplarMemory, class_id: int, samples) -> ExemplarMemory:
    """Replace one class's exemplars (given in herding order). New entries
    start fully REHEARSAL until the next split."""
    samples = np.asarray(samples, dtype=np.float64)
    classes = dict(memory.classes)
    if len(samples) == 0:
        classes.pop(class_id, None)
    else:
        classes[class_id] = StoredClass(
            class_id=class_id,
            samples=samples,
            partitions=np.zeros(len(samples), dtype=np.int64),
        )
    return ExemplarMemory(
        budget=memory.budget, heldout_fraction=memory.heldout_fraction, classes=classes
    )


def compute_quotas(budget: int, known_classes) -> dict[int, int]:
    """floor(budget / K) each, with the remainder given one extra slot per
    class starting from the lowest class id."""
    ids = sorted(set(int(c) for c in known_classes))
    if not ids:
        raise ValueError("known_classes must be non-empty")
    base, surplus = divmod(budget, len(ids))
    return {cid: base + (1 if rank < surplus else 0) for rank, cid in enumerate(ids)}


def rebalance(memory: ExemplarMemory, known_classes) -> tuple[ExemplarMemory, dict[int, int]]:
    """Recompute quotas over the known set and truncate stored classes to
    their herding-order prefix. Classes not yet stored keep their quota for
    the caller to fill via herd_select."""
    quotas = compute_quotas(memory.budget, known_classes)
    classes = {}
    for cid, cls in memory.classes.items():
        quota = quotas.get(cid, 0)
        if quota <= 0:
            continue
        classes[cid] = StoredClass(
            class_id=cid,
            samples=cls.samples[:quota],
            partitions=cls.partitions[:quota],
        )
    return (
        ExemplarMemory(
            budget=memory.budget, heldout_fraction=memory.heldout_fraction, classes=classes
        ),
        quotas,
    )


def herd_select(
    class_samples,
    class_feature_mean,
    extractor: ExtractorState | None,
    quota: int,
) -> list[int]:
    """Greedy herding: indices into class_samples, in selection order.

    Each pick minimizes the squared distance between the running exemplar
    feature mean and class_feature_mean; ties go to the lowest index. With
    extractor=None the samples are treated as features directly. The output
    is prefix-consistent: quota q is a prefix of quota q+1.
    """
    samples = np.asarray(class_samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, np.newaxis]
    n = len(samples)
    if n == 0:
        return []
    if extractor is None:
        feats = samples
    else:
        feats, _ = forward(extractor, samples)
    mean = np.asarray(class_feature_mean, dtype=np.float64).ravel()
    if mean.shape[0] != feats.shape[1]:
        raise ValueError("class_feature_mean dimension does not match features")
    quota = min(quota, n)
    selected: list[int] = []
    running = np.zeros_like(mean)
    remaining = list(range(n))
    for m in range(1, quota + 1):
        cand = np.array(remaining)
        trial = (running + feats[cand]) / m
        errs = np.einsum("ij,ij->i", trial - mean, trial - mean)
        best = cand[int(np.argmin(errs))]
        selected.append(int(best))
        running += feats[best]
        remaining.remove(best)
    return selected


def split_train_heldout(memory: ExemplarMemory, seed: int) -> ExemplarMemory:
    """Retag every class: round(heldout_fraction * n) samples HELDOUT via a
    per-class seeded permutation, the rest REHEARSAL. Deterministic in
    (seed, class_id); independent of other classes' contents."""
    classes = {}
    for cid, cls in memory.classes.items():
        n = cls.count
        k = round_half_up(memory.heldout_fraction * n)
        rng = np.random.default_rng(np.random.SeedSequence([seed, cid]))
        tags = np.zeros(n, dtype=np.int64)
        tags[rng.permutation(n)[:k]] = HELDOUT
        classes[cid] = StoredClass(class_id=cid, samples=cls.samples, partitions=tags)
    return ExemplarMemory(
        budget=memory.budget, heldout_fraction=memory.heldout_fraction, classes=classes
    )


def compose_batch(
    current_step_data: tuple[np.ndarray, np.ndarray],
    memory: ExemplarMemory,
    batch_size: int,
    memory_fraction: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mix a training batch: round(memory_fraction * batch_size) uniform
    draws from REHEARSAL memory, the remainder from the current step's
    data, order shuffled. Returns (inputs, labels, from_memory mask).

    Empty memory forces the fraction to 0. The current-step part is drawn
    without replacement (all of it if the pool is smaller); the memory part
    falls back to replacement only if the rehearsal pool is too small.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    if not 0.0 <= memory_fraction < 1.0:
        raise ValueError("memory_fraction must be in [0, 1)")
    x_new, y_new = current_step_data
    x_new = np.asarray(x_new, dtype=np.float64)
    y_new = np.asarray(y_new, dtype=np.int64)
    mem_x, mem_y = memory.rehearsal_pool()
    n_mem = 0 if len(mem_x) == 0 else round_half_up(memory_fraction * batch_size)
    n_cur = min(batch_size - n_mem, len(x_new))
    parts_x, parts_y, parts_m = [], [], []
    if n_mem > 0:
        idx = rng.choice(len(mem_x), size=n_mem, replace=len(mem_x) < n_mem)
        parts_x.append(mem_x[idx])
        parts_y.append(mem_y[idx])
        parts_m.append(np.ones(n_mem, dtype=bool))
    if n_cur > 0:
        idx = rng.choice(len(x_new), size=n_cur, replace=False)
        parts_x.append(x_new[idx])
        parts_y.append(y_new[idx])
        parts_m.append(np.zeros(n_cur, dtype=bool))
    if not parts_x:
        raise ValueError("nothing to compose: empty memory and empty current data")
    bx = np.concatenate(parts_x)
    by = np.concatenate(parts_y)
    bm = np.concatenate(parts_m)
    order = rng.permutation(len(bx))
    return bx[order], by[order], bm[order]
