"""Class-balanced augmentation and linear-head training for graded fundus images.

The package is a desk-scale pipeline: deterministic seeded augmentation
brings every training class up to a configured size, a pluggable feature
extractor feeds a softmax linear head trained with from-scratch Adam and
early stopping on validation macro F1, and rank-based one-vs-rest AUC plus
the usual confusion-matrix metrics score the untouched test subset.  The
``gradebal`` command drives the whole flow from one JSON config.
"""

from .augment import (
    AugmentRecord,
    DirectorySink,
    PipelineConfig,
    apply_pipeline,
    generate_balanced,
    read_augment_log,
    sample_pipeline,
    write_augment_log,
)
from .dataset import (
    DatasetSplit,
    ManifestEntry,
    NormalizationStats,
    balance_plan,
    binarize_label,
    carve_validation,
    load_manifest,
    normalize_image,
    read_split_csv,
    stratified_split,
    write_split_csv,
)
from .metrics import (
    MetricsReport,
    accuracy,
    confusion_matrix,
    evaluate,
    f1_scores,
    ovr_auc,
    precision_recall,
    report_to_dict,
    write_report_json,
)
from .rng import SplitMix64, derive_seed, fnv1a64
from .trainer import (
    AdamState,
    EpochLog,
    LinearHead,
    PixelFeatureExtractor,
    TrainConfig,
    adam_step,
    cross_entropy,
    fit,
    head_gradient,
    load_checkpoint,
    predict_scores,
    save_checkpoint,
    softmax,
)

__version__ = "1.0.0"

__all__ = [
    "AugmentRecord", "DirectorySink", "PipelineConfig", "apply_pipeline",
    "generate_balanced", "read_augment_log", "sample_pipeline",
    "write_augment_log",
    "DatasetSplit", "ManifestEntry", "NormalizationStats", "balance_plan",
    "binarize_label", "carve_validation", "load_manifest", "normalize_image",
    "read_split_csv", "stratified_split", "write_split_csv",
    "MetricsReport", "accuracy", "confusion_matrix", "evaluate", "f1_scores",
    "ovr_auc", "precision_recall", "report_to_dict", "write_report_json",
    "SplitMix64", "derive_seed", "fnv1a64",
    "AdamState", "EpochLog", "LinearHead", "PixelFeatureExtractor",
    "TrainConfig", "adam_step", "cross_entropy", "fit", "head_gradient",
    "load_checkpoint", "predict_scores", "save_checkpoint", "softmax",
]
