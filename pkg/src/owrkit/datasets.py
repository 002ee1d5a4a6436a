"""Synthetic benchmarks, feature-CSV ingestion, and episode construction.

Two generators: well-separated gaussian blobs (the easy sanity case) and
concentric annuli with per-class tube noise (classes share the origin, so
raw-input centroids are useless and per-class spreads differ, the hard
case for a single global rejection threshold).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .protocol import EpisodeSchedule

TRAIN = 0
TEST = 1

_GENERATORS = ("gaussian_blobs", "rings")


@dataclass(frozen=True)
class SyntheticSpec:
    generator: str = "gaussian_blobs"
    n_classes: int = 10
    dim: int = 2
    samples_per_class: int = 100
    variance_range: tuple = (0.5, 1.5)
    spacing: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.generator not in _GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}, expected one of {_GENERATORS}")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.dim < 1 or self.samples_per_class < 1:
            raise ValueError("dim and samples_per_class must be positive")
        low, high = self.variance_range
        if not 0 < low <= high:
            raise ValueError("variance_range must satisfy 0 < low <= high")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")


@dataclass
class DatasetHandle:
    """Immutable view of a labelled dataset with a per-sample TRAIN/TEST tag."""

    samples: np.ndarray
    labels: np.ndarray
    split: np.ndarray
    catalog: tuple = field(default=())

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.split = np.asarray(self.split, dtype=np.int64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be 2D")
        if not (len(self.samples) == len(self.labels) == len(self.split)):
            raise ValueError("samples, labels, and split must align")
        if not self.catalog:
            self.catalog = tuple(sorted(np.unique(self.labels).tolist()))
        missing = set(self.labels.tolist()) - set(self.catalog)
        if missing:
            raise ValueError(f"labels {sorted(missing)} missing from catalog")

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def subset(self, split_tag: int, class_ids=None) -> tuple[np.ndarray, np.ndarray]:
        mask = self.split == split_tag
        if class_ids is not None:
            mask &= np.isin(self.labels, np.fromiter(class_ids, dtype=np.int64))
        return self.samples[mask], self.labels[mask]

    def train_arrays(self, class_ids=None):
        return self.subset(TRAIN, class_ids)

    def test_arrays(self, class_ids=None):
        return self.subset(TEST, class_ids)


def _split_tags(n: int, rng: np.random.Generator, test_fraction: float = 0.2) -> np.ndarray:
    n_test = int(np.floor(test_fraction * n + 0.5))
    tags = np.full(n, TRAIN, dtype=np.int64)
    tags[rng.permutation(n)[:n_test]] = TEST
    return tags


def gen_synthetic(spec: SyntheticSpec) -> DatasetHandle:
    """Deterministic in spec.seed. Blob centers are rescaled so the minimum
    pairwise center distance equals spec.spacing exactly; ring radii are
    spacing * (c + 1) around the shared origin. Per-class isotropic variance
    is drawn uniformly from variance_range. 80/20 train/test per class."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
    variances = rng.uniform(spec.variance_range[0], spec.variance_range[1], size=spec.n_classes)
    xs, ys = [], []
    if spec.generator == "gaussian_blobs":
        centers = rng.normal(size=(spec.n_classes, spec.dim))
        diffs = centers[:, np.newaxis, :] - centers[np.newaxis, :, :]
        dists = np.sqrt(np.einsum("ijk,ijk->ij", diffs, diffs))
        min_dist = dists[np.triu_indices(spec.n_classes, k=1)].min()
        if min_dist <= 0:
            raise ValueError("degenerate center draw, change seed")
        centers *= spec.spacing / min_dist
        for c in range(spec.n_classes):
            pts = centers[c] + rng.normal(
                scale=np.sqrt(variances[c]), size=(spec.samples_per_class, spec.dim)
            )
            xs.append(pts)
            ys.append(np.full(spec.samples_per_class, c, dtype=np.int64))
    else:
        for c in range(spec.n_classes):
            radius = spec.spacing * (c + 1)
            theta = rng.uniform(0.0, 2.0 * np.pi, size=spec.samples_per_class)
            noise = rng.normal(scale=np.sqrt(variances[c]), size=(spec.samples_per_class, spec.dim))
            pts = noise
            pts[:, 0] += radius * np.cos(theta)
            if spec.dim > 1:
                pts[:, 1] += radius * np.sin(theta)
            xs.append(pts)
            ys.append(np.full(spec.samples_per_class, c, dtype=np.int64))
    samples = np.concatenate(xs)
    labels = np.concatenate(ys)
    split_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))
    split = np.concatenate(
        [_split_tags(spec.samples_per_class, split_rng) for _ in range(spec.n_classes)]
    )
    return DatasetHandle(samples=samples, labels=labels, split=split)


@dataclass(frozen=True)
class CsvSchema:
    """Layout of a feature CSV: which column holds the integer class label,
    which hold features (None = every other column), and whether the first
    row is a header. Without a header, columns are addressed by index."""

    label_column: str | int = "label"
    feature_columns: tuple | None = None
    has_header: bool = True


def _column_index(schema_col, header: list[str] | None, n_cols: int, what: str) -> int:
    if isinstance(schema_col, int):
        if not 0 <= schema_col < n_cols:
            raise ValueError(f"{what} index {schema_col} out of range for {n_cols} columns")
        return schema_col
    if header is None:
        raise ValueError(f"{what} given by name {schema_col!r} but the schema declares no header")
    if schema_col not in header:
        raise ValueError(f"{what} {schema_col!r} not found in header {header}")
    return header.index(schema_col)


def load_feature_csv(path, schema: CsvSchema = CsvSchema()) -> DatasetHandle:
    """Parse a comma-separated feature file into a DatasetHandle (all rows
    tagged TRAIN; episode splits come from make_schedule, not the file).
    Malformed rows fail with 1-based line numbers in the message."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = None
    start_line = 1
    if schema.has_header:
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
        start_line = 2
        if len(set(header)) != len(header):
            raise ValueError(f"{path}: duplicate column names in header")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    n_cols = len(rows[0])
    label_idx = _column_index(schema.label_column, header, n_cols, "label column")
    if schema.feature_columns is None:
        feat_idx = [i for i in range(n_cols) if i != label_idx]
    else:
        feat_idx = [_column_index(c, header, n_cols, "feature column") for c in schema.feature_columns]
    if not feat_idx:
        raise ValueError(f"{path}: no feature columns")
    labels, feats = [], []
    for offset, row in enumerate(rows):
        line = start_line + offset
        if len(row) != n_cols:
            raise ValueError(f"{path}:{line}: expected {n_cols} columns, found {len(row)}")
        try:
            label = int(row[label_idx])
        except ValueError:
            raise ValueError(f"{path}:{line}: label {row[label_idx]!r} is not an integer") from None
        vals = []
        for i in feat_idx:
            try:
                v = float(row[i])
            except ValueError:
                raise ValueError(f"{path}:{line}: non-numeric value {row[i]!r}") from None
            if not np.isfinite(v):
                raise ValueError(f"{path}:{line}: non-finite value {row[i]!r}")
            vals.append(v)
        labels.append(label)
        feats.append(vals)
    samples = np.array(feats, dtype=np.float64)
    return DatasetHandle(
        samples=samples,
        labels=np.array(labels, dtype=np.int64),
        split=np.full(len(labels), TRAIN, dtype=np.int64),
    )


def save_feature_csv(path, samples, labels) -> None:
    """Inverse of load_feature_csv with the default schema."""
    samples = np.asarray(samples, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(samples.shape[1])])
        for y, x in zip(labels, samples):
            writer.writerow([int(y)] + [repr(float(v)) for v in x])


def make_schedule(
    dataset: DatasetHandle,
    n_known: int,
    initial_classes: int,
    step_size: int,
    order_seed: int,
) -> EpisodeSchedule:
    """Seeded class permutation split into the initial episode, fixed-size
    incremental episodes, and the unknown pool. Requires at least one
    unknown class and (n_known - initial_classes) divisible by step_size."""
    catalog = list(dataset.catalog)
    if n_known + 1 > len(catalog):
        raise ValueError("need at least one class left over as unknown")
    if not 1 <= initial_classes <= n_known:
        raise ValueError("initial_classes must be in [1, n_known]")
    if step_size < 1 or (n_known - initial_classes) % step_size != 0:
        raise ValueError(
            f"(n_known - initial_classes) = {n_known - initial_classes} "
            f"not divisible by step_size {step_size}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([order_seed]))
    order = [catalog[i] for i in rng.permutation(len(catalog))]
    known, unknown = order[:n_known], order[n_known:]
    class_sets = [tuple(known[:initial_classes])]
    for start in range(initial_classes, n_known, step_size):
        class_sets.append(tuple(known[start : start + step_size]))
    return EpisodeSchedule(
        class_sets=tuple(class_sets), unknown_pool=tuple(unknown), seed=order_seed
    )
