"""Versioned JSON checkpoints of the full model state.

Plain JSON with sorted keys and round-trip float repr, so identical
states serialize to identical bytes. Version mismatches fail loudly
naming both versions.
"""

from __future__ import annotations

import json

import numpy as np

from .backbone import ExtractorConfig, ExtractorState
from .classifier import HeuristicThresholdState
from .memory import ExemplarMemory, StoredClass
from .protocol import ModelState
from .stats import ClassStats, RunningVariance

FORMAT_VERSION = 1


def _extractor_to_doc(state: ExtractorState | None):
    if state is None:
        return None
    return {
        "config": {
            "input_dim": state.config.input_dim,
            "layer_dims": list(state.config.layer_dims),
            "activation": state.config.activation,
            "init_seed": state.config.init_seed,
        },
        "weights": [w.tolist() for w in state.weights],
        "biases": [b.tolist() for b in state.biases],
    }


def _extractor_from_doc(doc) -> ExtractorState | None:
    if doc is None:
        return None
    cfg = doc["config"]
    state = ExtractorState(
        config=ExtractorConfig(
            input_dim=cfg["input_dim"],
            layer_dims=tuple(cfg["layer_dims"]),
            activation=cfg["activation"],
            init_seed=cfg["init_seed"],
        ),
        weights=[np.array(w, dtype=np.float64) for w in doc["weights"]],
        biases=[np.array(b, dtype=np.float64) for b in doc["biases"]],
    )
    return state


def model_to_doc(model: ModelState) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "method": model.method,
        "step_index": model.step_index,
        "strict_accept": model.strict_accept,
        "extractor": _extractor_to_doc(model.extractor),
        "old_extractor": _extractor_to_doc(model.old_extractor),
        "class_stats": [
            {
                "class_id": s.class_id,
                "centroid": s.centroid.tolist(),
                "count": s.count,
                "threshold": s.threshold,
            }
            for _, s in sorted(model.class_stats.items())
        ],
        "variance": {
            "count": model.variance.count,
            "mean": model.variance.mean,
            "mean_sq": model.variance.mean_sq,
        },
        "memory": {
            "budget": model.memory.budget,
            "heldout_fraction": model.memory.heldout_fraction,
            "classes": [
                {
                    "class_id": cid,
                    "samples": cls.samples.tolist(),
                    "partitions": cls.partitions.tolist(),
                }
                for cid, cls in sorted(model.memory.classes.items())
            ],
        },
        "tau_state": None
        if model.tau_state is None
        else {
            "tau": model.tau_state.tau,
            "step": model.tau_state.step,
            "minimum": model.tau_state.minimum,
        },
        "nno_tau": model.nno_tau,
        "nno_z": model.nno_z,
        "nno_percentile": model.nno_percentile,
    }


def model_from_doc(doc: dict) -> ModelState:
    found = doc.get("format_version")
    if found != FORMAT_VERSION:
        raise ValueError(f"checkpoint version mismatch: expected {FORMAT_VERSION}, found {found}")
    tau_doc = doc["tau_state"]
    return ModelState(
        method=doc["method"],
        extractor=_extractor_from_doc(doc["extractor"]),
        old_extractor=_extractor_from_doc(doc["old_extractor"]),
        class_stats={
            entry["class_id"]: ClassStats(
                class_id=entry["class_id"],
                centroid=np.array(entry["centroid"], dtype=np.float64),
                count=entry["count"],
                threshold=entry["threshold"],
            )
            for entry in doc["class_stats"]
        },
        variance=RunningVariance(
            count=doc["variance"]["count"],
            mean=doc["variance"]["mean"],
            mean_sq=doc["variance"]["mean_sq"],
        ),
        memory=ExemplarMemory(
            budget=doc["memory"]["budget"],
            heldout_fraction=doc["memory"]["heldout_fraction"],
            classes={
                entry["class_id"]: StoredClass(
                    class_id=entry["class_id"],
                    samples=np.array(entry["samples"], dtype=np.float64),
                    partitions=np.array(entry["partitions"], dtype=np.int64),
                )
                for entry in doc["memory"]["classes"]
            },
        ),
        tau_state=None
        if tau_doc is None
        else HeuristicThresholdState(
            tau=tau_doc["tau"], step=tau_doc["step"], minimum=tau_doc["minimum"]
        ),
        nno_tau=doc["nno_tau"],
        nno_z=doc["nno_z"],
        nno_percentile=doc["nno_percentile"],
        strict_accept=doc["strict_accept"],
        step_index=doc["step_index"],
    )


def save_checkpoint(path, model: ModelState) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_doc(model), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path) -> ModelState:
    with open(path, encoding="utf-8") as fh:
        return model_from_doc(json.load(fh))
