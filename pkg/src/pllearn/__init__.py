"""Multi-label audio tagging under partially observed labels.

Numpy-only toolkit comparing supervision policies when most (clip, class)
annotations are missing: treat missing as negative (B0), mask it out of the
loss (B1), clean suspected missing positives with a teacher's percentile
thresholds (label enhancing), or regularize with an EMA teacher and a
consistency loss (mean teacher).  Includes a seeded missing-label simulator,
macro-F1 / AUPRC metrics over observed labels only, and a replicated
experiment runner with byte-stable result files.
"""

from .data import (
    Dataset,
    EmbeddingSequence,
    LabelState,
    PartialLabelMatrix,
    SyntheticSpec,
    drop_labels,
    generate_synthetic,
    label_coverage,
    split_train_val,
)
from .enhance import LEConfig, class_thresholds, enhance_mask, run_label_enhancing
from .experiment import (
    ExperimentSpec,
    blob_sha1,
    dataset_fingerprint,
    run_experiment,
    run_id_for,
    summarize,
)
from .losses import bce_full, bce_masked, combined_loss, consistency_mse, default_mask
from .metrics import EvalTable, auprc, average_precision, macro_f1
from .network import (
    AttentionMILParams,
    NoiseSpec,
    forward,
    backward,
    init_params,
    load_params,
    predict,
    save_params,
)
from .optim import AdamConfig, AdamState, adam_step, ema_update
from .trainers import (
    TrainConfig,
    TrainReport,
    TrainingDiverged,
    evaluate,
    predict_dataset,
    train_baseline,
    train_mean_teacher,
)

__version__ = "0.1.0"

__all__ = [
    "AdamConfig",
    "AdamState",
    "AttentionMILParams",
    "Dataset",
    "EmbeddingSequence",
    "EvalTable",
    "ExperimentSpec",
    "LabelState",
    "LEConfig",
    "NoiseSpec",
    "PartialLabelMatrix",
    "SyntheticSpec",
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "adam_step",
    "auprc",
    "average_precision",
    "backward",
    "blob_sha1",
    "bce_full",
    "bce_masked",
    "class_thresholds",
    "combined_loss",
    "consistency_mse",
    "dataset_fingerprint",
    "default_mask",
    "drop_labels",
    "ema_update",
    "enhance_mask",
    "evaluate",
    "forward",
    "generate_synthetic",
    "init_params",
    "label_coverage",
    "load_params",
    "macro_f1",
    "predict",
    "predict_dataset",
    "run_experiment",
    "run_id_for",
    "run_label_enhancing",
    "save_params",
    "split_train_val",
    "summarize",
    "train_baseline",
    "train_mean_teacher",
]
