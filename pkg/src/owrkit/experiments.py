"""Experiment drivers behind the CLI: strict config validation, the
(order_seed, run) grid, ablations, and deterministic artifacts.

Every run writes, per (order_seed, run) pair: the fully resolved config
with all derived seeds, per-step metrics as JSONL and as an aligned text
table, a flat step-vs-metric table for plotting, the training log, and a
checkpoint per step. Reruns with the same config are byte-identical: no
timestamps, floats via repr, fixed iteration order, atomic writes.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .classifier import UNKNOWN, HeuristicThresholdState, deepnno_predict, deepnno_threshold_update
from .datasets import CsvSchema, SyntheticSpec, gen_synthetic, load_feature_csv, make_schedule
from .evaluation import build_report, eval_closed_no_rejection, eval_closed_with_rejection
from .losses import LossWeights
from .memory import REHEARSAL
from .protocol import (
    ModelState,
    TrainConfig,
    clone_model,
    init_model,
    predict_closed,
    predict_open,
    run_incremental_step,
    stage2_learn_thresholds,
)

OUTPUT_ROOT_ENV = "OWRKIT_OUTPUT_ROOT"

LOSS_ROWS = ("gc", "lc", "gc_lc")
REJECTION_ROWS = (
    "class_specific_two_stage",
    "class_specific_single_stage",
    "global_two_stage",
    "deepnno_heuristic",
)


class ConfigError(ValueError):
    """Invalid experiment configuration; messages name the field."""


def _expect(doc: dict, where: str, known: dict) -> dict:
    """Apply defaults and reject unknown keys. `known` maps field name to
    default (REQUIRED sentinel for mandatory fields)."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object, got {type(doc).__name__}")
    unknown = set(doc) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    out = {}
    for key, default in known.items():
        if key in doc:
            out[key] = doc[key]
        elif default is _REQUIRED:
            raise ConfigError(f"{where}: missing required key {key!r}")
        else:
            out[key] = default
    return out


_REQUIRED = object()


def default_config() -> dict:
    """The full config with every default spelled out (diffable)."""
    return {
        "dataset": {
            "kind": "synthetic",
            "generator": "gaussian_blobs",
            "n_classes": 10,
            "dim": 2,
            "samples_per_class": 100,
            "variance_range": [0.5, 1.5],
            "spacing": 10.0,
            "seed": 0,
        },
        "schedule": {
            "n_known": 6,
            "initial_classes": 2,
            "step_size": 2,
            "order_seeds": [0, 1, 2],
            "runs_per_order": 1,
        },
        "method": {
            "name": "ours",
            "feature_dims": [32, 8],
            "memory_budget": 2000,
            "heldout_fraction": 0.2,
            "strict_accept": False,
            "tau_init": 0.5,
            "tau_step": None,
            "nno_z": 1.0,
            "nno_percentile": 95.0,
        },
        "training": {
            "epochs_initial": 12,
            "epochs_incremental": 4,
            "learning_rate": 0.1,
            "batch_size": 128,
            "momentum": 0.9,
            "weight_decay": 0.001,
            "memory_fraction": 0.4,
            "snnl_weight": 1.0,
            "distill_weight": 1.0,
            "include_gc": True,
            "threshold_lr": 0.01,
            "threshold_epochs": 50,
            "heldout_jitter": 0.0,
            "seed": 0,
        },
        "output_dir": "owrkit-runs",
    }


def resolve_config(doc: dict) -> dict:
    """Validate a raw config document and fill in every default."""
    top = _expect(
        doc,
        "config",
        {
            "dataset": _REQUIRED,
            "schedule": _REQUIRED,
            "method": {},
            "training": {},
            "output_dir": default_config()["output_dir"],
            "order_seed": None,
            "run": None,
            "derived_seed": None,
        },
    )
    defaults = default_config()
    kind = top["dataset"].get("kind", "synthetic") if isinstance(top["dataset"], dict) else None
    if kind == "csv":
        dataset = _expect(
            top["dataset"],
            "dataset",
            {
                "kind": _REQUIRED,
                "path": _REQUIRED,
                "label_column": "label",
                "feature_columns": None,
                "has_header": True,
            },
        )
    elif kind == "synthetic":
        dataset = _expect(top["dataset"], "dataset", dict(defaults["dataset"]))
    else:
        raise ConfigError(f"dataset.kind: expected 'synthetic' or 'csv', got {kind!r}")
    schedule = _expect(top["schedule"], "schedule", dict(defaults["schedule"], **{k: _REQUIRED for k in ("n_known", "initial_classes", "step_size")}))
    method = _expect(top["method"], "method", dict(defaults["method"]))
    training = _expect(top["training"], "training", dict(defaults["training"]))
    if method["name"] not in ("ours", "nno", "deepnno"):
        raise ConfigError(f"method.name: unknown method {method['name']!r}")
    if not isinstance(schedule["order_seeds"], list) or not schedule["order_seeds"]:
        raise ConfigError("schedule.order_seeds: expected a non-empty list")
    if not isinstance(schedule["runs_per_order"], int) or schedule["runs_per_order"] < 1:
        raise ConfigError("schedule.runs_per_order: expected a positive integer")
    resolved = {
        "dataset": dataset,
        "schedule": schedule,
        "method": method,
        "training": training,
        "output_dir": top["output_dir"],
    }
    for key in ("order_seed", "run", "derived_seed"):
        if top[key] is not None:
            resolved[key] = top[key]
    # Fail fast on bad numerics before any work starts.
    _train_config(resolved, seed=0)
    if kind == "synthetic":
        _synthetic_spec(dataset)
    return resolved


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return resolve_config(doc)


def _synthetic_spec(dataset: dict) -> SyntheticSpec:
    try:
        return SyntheticSpec(
            generator=dataset["generator"],
            n_classes=dataset["n_classes"],
            dim=dataset["dim"],
            samples_per_class=dataset["samples_per_class"],
            variance_range=tuple(dataset["variance_range"]),
            spacing=dataset["spacing"],
            seed=dataset["seed"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"dataset: {exc}") from None


def _load_dataset(dataset: dict):
    if dataset["kind"] == "csv":
        if not Path(dataset["path"]).exists():
            raise ConfigError(f"dataset.path: file not found: {dataset['path']}")
        label = dataset["label_column"]
        cols = dataset["feature_columns"]
        return load_feature_csv(
            dataset["path"],
            CsvSchema(
                label_column=label,
                feature_columns=None if cols is None else tuple(cols),
                has_header=dataset["has_header"],
            ),
        )
    return gen_synthetic(_synthetic_spec(dataset))


def _train_config(resolved: dict, seed: int) -> TrainConfig:
    tr = resolved["training"]
    try:
        return TrainConfig(
            epochs_initial=tr["epochs_initial"],
            epochs_incremental=tr["epochs_incremental"],
            learning_rate=tr["learning_rate"],
            batch_size=tr["batch_size"],
            momentum=tr["momentum"],
            weight_decay=tr["weight_decay"],
            memory_fraction=tr["memory_fraction"],
            weights=LossWeights(snnl=tr["snnl_weight"], distill=tr["distill_weight"]),
            include_gc=tr["include_gc"],
            threshold_lr=tr["threshold_lr"],
            threshold_epochs=tr["threshold_epochs"],
            heldout_jitter=tr["heldout_jitter"],
            seed=seed,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"training: {exc}") from None


def _derived_seed(base_seed: int, order_seed: int, run: int) -> int:
    return int(np.random.SeedSequence([base_seed, order_seed, run]).generate_state(1)[0])


def _init_from_config(resolved: dict, input_dim: int, seed: int) -> ModelState:
    m = resolved["method"]
    return init_model(
        input_dim,
        feature_dims=tuple(m["feature_dims"]),
        method=m["name"],
        init_seed=seed,
        budget=m["memory_budget"],
        heldout_fraction=m["heldout_fraction"],
        strict_accept=m["strict_accept"],
        tau_init=m["tau_init"],
        tau_step=m["tau_step"],
        nno_z=m["nno_z"],
        nno_percentile=m["nno_percentile"],
    )


def extractor_checksum(model: ModelState) -> str:
    """sha256 over the extractor parameters (empty string for none)."""
    if model.extractor is None:
        return ""
    h = hashlib.sha256()
    for w, b in zip(model.extractor.weights, model.extractor.biases):
        h.update(np.ascontiguousarray(w).tobytes())
        h.update(np.ascontiguousarray(b).tobytes())
    return h.hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True) + "\n"


def _format_table(headers: list, rows: list) -> str:
    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    cells = [[fmt(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for r in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def output_root(resolved: dict, override=None) -> Path:
    if override is not None:
        return Path(override)
    root = os.environ.get(OUTPUT_ROOT_ENV, "")
    out = Path(resolved["output_dir"])
    if root and not out.is_absolute():
        return Path(root) / out
    return out


def run_pair(resolved: dict, order_seed: int, run: int, out_dir: Path) -> list[dict]:
    """One full (order_seed, run) experiment. Returns per-step report dicts
    and writes all artifacts under out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    data = _load_dataset(resolved["dataset"])
    sched_cfg = resolved["schedule"]
    schedule = make_schedule(
        data,
        n_known=sched_cfg["n_known"],
        initial_classes=sched_cfg["initial_classes"],
        step_size=sched_cfg["step_size"],
        order_seed=order_seed,
    )
    seed = _derived_seed(resolved["training"]["seed"], order_seed, run)
    config = _train_config(resolved, seed)
    model = _init_from_config(resolved, data.dim, seed)
    pair_config = dict(resolved, order_seed=order_seed, run=run, derived_seed=seed)
    _atomic_write(out_dir / "config.json", json.dumps(pair_config, indent=2, sort_keys=True) + "\n")

    reports, log_lines = [], []
    for t in range(schedule.n_steps):
        train_t = data.train_arrays(schedule.class_sets[t])
        model, log = run_incremental_step(model, schedule, t, train_t, config)
        log_lines.extend(_json_line(rec) for rec in log)
        save_checkpoint(out_dir / f"checkpoint_step{t}.json", model)
        known_test = data.test_arrays(schedule.known_through(t))
        unknown_test = data.test_arrays(schedule.unknown_pool)[0]
        report = build_report(model, known_test, unknown_test, t).as_dict()
        reports.append(report)

    _atomic_write(out_dir / "metrics.jsonl", "".join(_json_line(r) for r in reports))
    headers = ["step", "cw_no_rej", "cw_rej", "open_set_acc", "owr", "owr_h", "known_rejection_rate"]
    rows = [[r[h] for h in headers] for r in reports]
    _atomic_write(out_dir / "metrics.txt", _format_table(headers, rows))
    plot_lines = ["step\tmetric\tvalue\n"]
    for r in reports:
        for metric in headers[1:]:
            v = r[metric]
            plot_lines.append(f"{r['step']}\t{metric}\t{'' if v is None else repr(float(v))}\n")
    _atomic_write(out_dir / "plot.tsv", "".join(plot_lines))
    _atomic_write(out_dir / "train_log.jsonl", "".join(log_lines))
    return reports


def _pair_worker(payload: tuple) -> tuple:
    resolved, order_seed, run, out_dir = payload
    return (order_seed, run), run_pair(resolved, order_seed, run, Path(out_dir))


def _pairs(resolved: dict) -> list[tuple]:
    sched = resolved["schedule"]
    return [
        (order_seed, run)
        for order_seed in sched["order_seeds"]
        for run in range(sched["runs_per_order"])
    ]


def cmd_run(resolved: dict, out_override=None, workers: int = 1) -> Path:
    """Execute the full (order_seed, run) grid and write the summary."""
    root = output_root(resolved, out_override)
    root.mkdir(parents=True, exist_ok=True)
    _atomic_write(root / "resolved_config.json", json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    payloads = [
        (resolved, order_seed, run, str(root / f"order{order_seed}_run{run}"))
        for order_seed, run in _pairs(resolved)
    ]
    results: dict = {}
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, reports in pool.map(_pair_worker, payloads):
                results[key] = reports
    else:
        for payload in payloads:
            key, reports = _pair_worker(payload)
            results[key] = reports

    ordered = [results[(o, r)] for o, r in _pairs(resolved)]
    n_steps = len(ordered[0])
    metrics = ["cw_no_rej", "cw_rej", "open_set_acc", "owr", "owr_h"]
    per_step = []
    for t in range(n_steps):
        entry = {"step": t}
        for m in metrics:
            entry[m] = float(np.mean([rep[t][m] for rep in ordered]))
        per_step.append(entry)
    overall = {m: float(np.mean([e[m] for e in per_step])) for m in metrics}
    summary = {
        "n_experiments": len(ordered),
        "per_step_mean": per_step,
        "across_steps_mean": overall,
    }
    _atomic_write(root / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    rows = [[e["step"]] + [e[m] for m in metrics] for e in per_step]
    rows.append(["mean"] + [overall[m] for m in metrics])
    _atomic_write(root / "summary.txt", _format_table(["step"] + metrics, rows))
    return root


def eval_checkpoint(model: ModelState, resolved: dict, threshold_override=None) -> dict:
    """Pure re-evaluation of a trained model on its schedule's test data.

    Needs order_seed in the resolved config (the per-experiment config.json
    has it). Empty unknown pool leaves the open-set fields missing.
    """
    if "order_seed" not in resolved:
        raise ConfigError(
            "config has no order_seed; pass the per-experiment config.json, not the top-level one"
        )
    data = _load_dataset(resolved["dataset"])
    sched_cfg = resolved["schedule"]
    schedule = make_schedule(
        data,
        n_known=sched_cfg["n_known"],
        initial_classes=sched_cfg["initial_classes"],
        step_size=sched_cfg["step_size"],
        order_seed=resolved["order_seed"],
    )
    t = model.step_index
    if t < 0:
        raise ValueError("checkpoint has no completed step")
    work = clone_model(model)
    if threshold_override is not None:
        for cid, s in work.class_stats.items():
            work.class_stats[cid] = replace(s, threshold=float(threshold_override))
    known_test = data.test_arrays(schedule.known_through(t))
    unknown_test = data.test_arrays(schedule.unknown_pool)[0]
    if len(unknown_test) == 0:
        report = {
            "step": t,
            "cw_no_rej": eval_closed_no_rejection(work, known_test),
            "cw_rej": eval_closed_with_rejection(work, known_test),
            "open_set_acc": None,
            "owr": None,
            "owr_h": None,
            "known_rejection_rate": None,
        }
    else:
        report = build_report(work, known_test, unknown_test, t).as_dict()
    return report


def _rejection_row_metrics(model: ModelState, known_test, unknown_test, predict_fn) -> dict:
    """rate/open/diff for one thresholding strategy sharing the extractor."""
    x, y = known_test
    closed = predict_closed(model, x)
    correct = closed == y
    open_known = predict_fn(x)
    open_unknown = predict_fn(unknown_test)
    open_acc = float(np.mean(open_unknown == UNKNOWN))
    if not correct.any():
        return {"known_rejection_rate": None, "open_set_acc": open_acc, "diff": None}
    rate = float(np.mean(open_known[correct] == UNKNOWN))
    return {"known_rejection_rate": rate, "open_set_acc": open_acc, "diff": open_acc - rate}


def _rehearsal_by_class(model: ModelState) -> dict:
    pools = {}
    for cid, cls in model.memory.classes.items():
        mask = cls.partitions == REHEARSAL
        if mask.any():
            pools[cid] = cls.samples[mask]
    return pools


def _heuristic_tau(model: ModelState, config: TrainConfig, rng) -> float:
    """DeepNNO-style threshold fitted to a frozen extractor: heuristic
    updates over the rehearsal pool with variance-normalized scores."""
    state = HeuristicThresholdState()
    x, y = model.memory.rehearsal_pool()
    feats = model.features(x)
    stats = model.stats_list()
    for _ in range(config.threshold_epochs):
        for i in rng.permutation(len(feats)):
            pred = deepnno_predict(feats[i], stats, state.tau, variance=model.variance)
            state = deepnno_threshold_update(state, pred, int(y[i]))
    return state.tau


def rejection_ablation_step(
    model: ModelState, config: TrainConfig, known_test, unknown_test, t: int
) -> dict:
    """All four rejection strategies evaluated on one trained step, reusing
    the step's extractor, centroids, and variance."""
    heldout = model.memory.heldout_by_class()
    rehearsal = _rehearsal_by_class(model)
    rows = {}

    rows["class_specific_two_stage"] = _rejection_row_metrics(
        model, known_test, unknown_test, lambda xs: predict_open(model, xs)
    )

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, t, 1]))
    global_model = clone_model(model)
    thr = stage2_learn_thresholds(global_model, heldout, config, rng, mode="global")
    for cid, radius in thr.items():
        global_model.class_stats[cid] = replace(global_model.class_stats[cid], threshold=radius)
    rows["global_two_stage"] = _rejection_row_metrics(
        global_model, known_test, unknown_test, lambda xs: predict_open(global_model, xs)
    )

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, t, 2]))
    single_model = clone_model(model)
    # jitter models unseen-sample variability; single-stage learns on raw
    # training features, so it gets none
    raw_config = replace(config, heldout_jitter=0.0)
    thr = stage2_learn_thresholds(single_model, rehearsal, raw_config, rng, mode="class_specific")
    for cid, radius in thr.items():
        single_model.class_stats[cid] = replace(single_model.class_stats[cid], threshold=radius)
    rows["class_specific_single_stage"] = _rejection_row_metrics(
        single_model, known_test, unknown_test, lambda xs: predict_open(single_model, xs)
    )

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, t, 3]))
    tau = _heuristic_tau(model, config, rng)
    stats = model.stats_list()

    def predict_heuristic(xs):
        feats = model.features(xs)
        return np.array(
            [deepnno_predict(f, stats, tau, variance=model.variance).label for f in feats],
            dtype=np.int64,
        )

    rows["deepnno_heuristic"] = _rejection_row_metrics(
        model, known_test, unknown_test, predict_heuristic
    )

    checksum = extractor_checksum(model)
    for row in rows.values():
        row["extractor_checksum"] = checksum
    return rows


def ablate_rejection_pair(resolved: dict, order_seed: int, run: int) -> dict:
    """Train once, evaluate the four rejection strategies at every step."""
    data = _load_dataset(resolved["dataset"])
    sched_cfg = resolved["schedule"]
    schedule = make_schedule(
        data,
        n_known=sched_cfg["n_known"],
        initial_classes=sched_cfg["initial_classes"],
        step_size=sched_cfg["step_size"],
        order_seed=order_seed,
    )
    seed = _derived_seed(resolved["training"]["seed"], order_seed, run)
    config = _train_config(resolved, seed)
    model = _init_from_config(resolved, data.dim, seed)
    per_row: dict = {name: [] for name in REJECTION_ROWS}
    for t in range(schedule.n_steps):
        train_t = data.train_arrays(schedule.class_sets[t])
        model, _ = run_incremental_step(model, schedule, t, train_t, config)
        known_test = data.test_arrays(schedule.known_through(t))
        unknown_test = data.test_arrays(schedule.unknown_pool)[0]
        step_rows = rejection_ablation_step(model, config, known_test, unknown_test, t)
        for name in REJECTION_ROWS:
            per_row[name].append(dict(step_rows[name], step=t))
    out = {}
    for name in REJECTION_ROWS:
        diffs = [r["diff"] for r in per_row[name] if r["diff"] is not None]
        out[name] = {
            "per_step": per_row[name],
            "mean_diff": float(np.mean(diffs)) if diffs else None,
            "extractor_checksums": [r["extractor_checksum"] for r in per_row[name]],
        }
    return out


def ablate_losses_pair(resolved: dict, order_seed: int, run: int) -> dict:
    """Three separately trained loss configurations on shared data/seeds."""
    out = {}
    for row in LOSS_ROWS:
        variant = json.loads(json.dumps(resolved))
        tr = variant["training"]
        if row == "gc":
            tr["snnl_weight"] = 0.0
            tr["include_gc"] = True
        elif row == "lc":
            tr["include_gc"] = False
            if tr["snnl_weight"] == 0.0:
                tr["snnl_weight"] = 1.0
        data = _load_dataset(variant["dataset"])
        sched_cfg = variant["schedule"]
        schedule = make_schedule(
            data,
            n_known=sched_cfg["n_known"],
            initial_classes=sched_cfg["initial_classes"],
            step_size=sched_cfg["step_size"],
            order_seed=order_seed,
        )
        seed = _derived_seed(variant["training"]["seed"], order_seed, run)
        config = _train_config(variant, seed)
        model = _init_from_config(variant, data.dim, seed)
        reports = []
        for t in range(schedule.n_steps):
            train_t = data.train_arrays(schedule.class_sets[t])
            model, _ = run_incremental_step(model, schedule, t, train_t, config)
            known_test = data.test_arrays(schedule.known_through(t))
            unknown_test = data.test_arrays(schedule.unknown_pool)[0]
            reports.append(build_report(model, known_test, unknown_test, t).as_dict())
        out[row] = {
            "per_step": reports,
            "mean_owr": float(np.mean([r["owr"] for r in reports])),
            "mean_owr_h": float(np.mean([r["owr_h"] for r in reports])),
        }
    return out


def _ablate_worker(payload: tuple) -> tuple:
    resolved, axis, order_seed, run = payload
    fn = ablate_losses_pair if axis == "losses" else ablate_rejection_pair
    return (order_seed, run), fn(resolved, order_seed, run)


def cmd_ablate(resolved: dict, axis: str, out_override=None, workers: int = 1) -> Path:
    """Run one ablation axis over the (order_seed, run) grid; write the
    comparison table plus per-pair records."""
    if axis not in ("losses", "rejection"):
        raise ConfigError(f"axis: expected 'losses' or 'rejection', got {axis!r}")
    root = output_root(resolved, out_override)
    root.mkdir(parents=True, exist_ok=True)
    _atomic_write(root / "resolved_config.json", json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    payloads = [(resolved, axis, o, r) for o, r in _pairs(resolved)]
    results: dict = {}
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, rows in pool.map(_ablate_worker, payloads):
                results[key] = rows
    else:
        for payload in payloads:
            key, rows = _ablate_worker(payload)
            results[key] = rows
    ordered_keys = _pairs(resolved)
    doc = {
        "axis": axis,
        "pairs": [
            {"order_seed": o, "run": r, "rows": results[(o, r)]} for o, r in ordered_keys
        ],
    }
    row_names = LOSS_ROWS if axis == "losses" else REJECTION_ROWS
    summary_rows = []
    if axis == "losses":
        n_steps = len(results[ordered_keys[0]][row_names[0]]["per_step"])
        headers = ["row"] + [f"owr_step{t}" for t in range(n_steps)] + ["owr_h_avg"]
        for name in row_names:
            per_step_med = [
                float(np.median([results[k][name]["per_step"][t]["owr"] for k in ordered_keys]))
                for t in range(n_steps)
            ]
            med_h = float(np.median([results[k][name]["mean_owr_h"] for k in ordered_keys]))
            doc.setdefault("median", {})[name] = {
                "owr_per_step": per_step_med,
                "mean_owr": float(
                    np.median([results[k][name]["mean_owr"] for k in ordered_keys])
                ),
                "mean_owr_h": med_h,
            }
            summary_rows.append([name] + per_step_med + [med_h])
    else:
        headers = ["row", "known_rejection_rate", "open_set_acc", "diff"]
        for name in row_names:
            med = {}
            for metric in ("known_rejection_rate", "open_set_acc", "diff"):
                vals = []
                for k in ordered_keys:
                    per_step = results[k][name]["per_step"]
                    v = [r[metric] for r in per_step if r[metric] is not None]
                    if v:
                        vals.append(float(np.mean(v)))
                med[metric] = float(np.median(vals)) if vals else None
            doc.setdefault("median", {})[name] = med
            summary_rows.append(
                [name, med["known_rejection_rate"], med["open_set_acc"], med["diff"]]
            )
    _atomic_write(root / f"ablate_{axis}.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _atomic_write(root / f"ablate_{axis}.txt", _format_table(headers, summary_rows))
    return root


def _compare_worker(payload: tuple) -> tuple:
    resolved, method, order_seed, run = payload
    variant = json.loads(json.dumps(resolved))
    variant["method"]["name"] = method
    out_dir = Path(variant["_compare_dir"]) / method / f"order{order_seed}_run{run}"
    variant.pop("_compare_dir")
    return (method, order_seed, run), run_pair(variant, order_seed, run, out_dir)


def cmd_compare(resolved: dict, out_override=None, workers: int = 1) -> Path:
    """Run ours, NNO, and DeepNNO on the same data/schedule grid and emit
    a per-method comparison table."""
    root = output_root(resolved, out_override)
    root.mkdir(parents=True, exist_ok=True)
    _atomic_write(root / "resolved_config.json", json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    methods = ("ours", "nno", "deepnno")
    carrier = dict(resolved, _compare_dir=str(root))
    payloads = [(carrier, m, o, r) for m in methods for o, r in _pairs(resolved)]
    results: dict = {}
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, reports in pool.map(_compare_worker, payloads):
                results[key] = reports
    else:
        for payload in payloads:
            key, reports = _compare_worker(payload)
            results[key] = reports
    metrics = ["cw_no_rej", "cw_rej", "open_set_acc", "owr", "owr_h"]
    doc: dict = {"methods": {}}
    rows = []
    for m in methods:
        per_pair = [results[(m, o, r)] for o, r in _pairs(resolved)]
        mean = {
            metric: float(np.mean([np.mean([step[metric] for step in rep]) for rep in per_pair]))
            for metric in metrics
        }
        doc["methods"][m] = {"mean": mean}
        rows.append([m] + [mean[metric] for metric in metrics])
    _atomic_write(root / "compare.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _atomic_write(root / "compare.txt", _format_table(["method"] + metrics, rows))
    return root
