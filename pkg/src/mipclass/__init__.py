"""Mask-guided multi-channel MIP pipeline for breast DCE-MRI classification."""

from .augment2d import (
    AugmentPolicy,
    augment,
    default_policy,
    derive_seed,
    identity_policy,
)
from .classhead import (
    ClassWeights,
    HeadParams,
    TrainConfig,
    TrainResult,
    class_weights,
    extract_features,
    feature_dim,
    forward,
    grad_weighted_ce,
    lr_schedule,
    predict_labels,
    train_head,
    uniform_weights,
    weighted_ce,
)
from .errors import MipclassError
from .evalkit import (
    BENIGN,
    MALIGNANT,
    NO_LESION,
    FoldPlan,
    MetricsReport,
    Prediction,
    confusion,
    ensemble,
    ensemble_all,
    evaluate,
    max_label,
    overall_score,
    read_predictions_csv,
    roc_auc_micro,
    sens_at_spec,
    spec_at_sens,
    stratified_kfold,
    write_predictions_csv,
)
from .geometry import (
    Interp,
    RowWindow,
    crop_or_pad,
    extract_rows,
    localize_rows,
    reorient_canonical,
    resample,
    split_lr,
)
from .mipbuild import (
    CHANNEL_NAMES,
    SIDES,
    BuildConfig,
    MipStack,
    NormConstants,
    Study,
    apply_mask,
    build_stack,
    denormalize_stack,
    mip_z,
    normalize_stack,
    stack_from_blob,
    stack_to_blob,
    subtract_clamped,
)
from .pipeline_cli import Manifest, PipelineConfig, load_config, main
from .tensorio import TensorBlob, read_blob, read_nifti, write_blob, write_nifti
from .volume import Volume

__version__ = "0.1.0"

__all__ = [
    "AugmentPolicy",
    "BENIGN",
    "BuildConfig",
    "CHANNEL_NAMES",
    "ClassWeights",
    "FoldPlan",
    "HeadParams",
    "Interp",
    "MALIGNANT",
    "Manifest",
    "MetricsReport",
    "MipStack",
    "MipclassError",
    "NO_LESION",
    "NormConstants",
    "PipelineConfig",
    "Prediction",
    "RowWindow",
    "SIDES",
    "Study",
    "TensorBlob",
    "TrainConfig",
    "TrainResult",
    "Volume",
    "apply_mask",
    "augment",
    "build_stack",
    "class_weights",
    "confusion",
    "crop_or_pad",
    "default_policy",
    "denormalize_stack",
    "derive_seed",
    "ensemble",
    "ensemble_all",
    "evaluate",
    "extract_features",
    "extract_rows",
    "feature_dim",
    "forward",
    "grad_weighted_ce",
    "identity_policy",
    "load_config",
    "localize_rows",
    "lr_schedule",
    "main",
    "max_label",
    "mip_z",
    "normalize_stack",
    "overall_score",
    "predict_labels",
    "read_blob",
    "read_nifti",
    "read_predictions_csv",
    "reorient_canonical",
    "resample",
    "roc_auc_micro",
    "sens_at_spec",
    "spec_at_sens",
    "split_lr",
    "stack_from_blob",
    "stack_to_blob",
    "stratified_kfold",
    "subtract_clamped",
    "train_head",
    "uniform_weights",
    "weighted_ce",
    "write_blob",
    "write_nifti",
    "write_predictions_csv",
    "__version__",
]
