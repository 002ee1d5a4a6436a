"""Open-world recognition with incremental class arrival.

A metric-learned feature extractor (global + local clustering losses,
feature distillation), a nearest-centroid classifier with learned
per-class rejection radii, exemplar rehearsal memory, the NNO / DeepNNO
baselines, and an evaluation harness."""

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
from .checkpoint import load_checkpoint, save_checkpoint
from .classifier import (
    UNKNOWN,
    HeuristicThresholdState,
    Prediction,
    deepnno_predict,
    deepnno_threshold_update,
    ncm_predict,
    nno_predict,
    predict_with_rejection,
)
from .datasets import (
    CsvSchema,
    DatasetHandle,
    SyntheticSpec,
    gen_synthetic,
    load_feature_csv,
    make_schedule,
    save_feature_csv,
)
from .estimator import DeepNNORecognizer, NNORecognizer, OpenWorldRecognizer
from .evaluation import (
    MetricsReport,
    build_report,
    compose_owr,
    eval_closed_no_rejection,
    eval_closed_with_rejection,
    eval_open_set,
    rejection_rate_diff,
)
from .losses import (
    LossOutput,
    LossWeights,
    class_scores,
    deepnno_bce,
    deepnno_score,
    ds_loss,
    gc_loss,
    lc_loss,
    md_loss,
    nno_score,
    total_loss,
)
from .memory import (
    ExemplarMemory,
    compose_batch,
    herd_select,
    rebalance,
    split_train_heldout,
)
from .protocol import (
    EpisodeSchedule,
    ModelState,
    TrainConfig,
    init_model,
    predict_closed,
    predict_open,
    run_incremental_step,
    stage1_train_epoch,
    stage2_learn_thresholds,
)
from .stats import ClassStats, RunningVariance, batch_variance, update_centroid, update_global_variance

__version__ = "0.1.0"

__all__ = [
    "UNKNOWN",
    "ClassStats",
    "CsvSchema",
    "DatasetHandle",
    "DeepNNORecognizer",
    "EpisodeSchedule",
    "ExemplarMemory",
    "ExtractorConfig",
    "ExtractorState",
    "HeuristicThresholdState",
    "LossOutput",
    "LossWeights",
    "MetricsReport",
    "ModelState",
    "NNORecognizer",
    "OpenWorldRecognizer",
    "Prediction",
    "RunningVariance",
    "SyntheticSpec",
    "TrainConfig",
    "backward",
    "batch_variance",
    "build_report",
    "class_scores",
    "compose_batch",
    "compose_owr",
    "deepnno_bce",
    "deepnno_predict",
    "deepnno_score",
    "deepnno_threshold_update",
    "ds_loss",
    "eval_closed_no_rejection",
    "eval_closed_with_rejection",
    "eval_open_set",
    "forward",
    "gc_loss",
    "gen_synthetic",
    "herd_select",
    "init_extractor",
    "init_model",
    "init_optimizer",
    "lc_loss",
    "load_checkpoint",
    "load_feature_csv",
    "make_schedule",
    "md_loss",
    "ncm_predict",
    "nno_predict",
    "nno_score",
    "predict_closed",
    "predict_open",
    "predict_with_rejection",
    "rebalance",
    "rejection_rate_diff",
    "run_incremental_step",
    "save_checkpoint",
    "save_feature_csv",
    "sgd_step",
    "snapshot",
    "split_train_heldout",
    "stage1_train_epoch",
    "stage2_learn_thresholds",
    "total_loss",
    "update_centroid",
    "update_global_variance",
]
