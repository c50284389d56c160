"""Biquality learning: classifiers trained from a small trusted set and a
large, possibly corrupted, untrusted set."""

from .correction import (
    CorrectionError,
    CorrectionKind,
    backward_corrected_loss,
    estimate_T_anchor,
    estimate_T_trusted,
    find_anchors,
    forward_corrected_probs,
    glc_fit,
)
from .corruption import (
    CorruptionSpec,
    TransitionMatrix,
    apply_label_noise,
    apply_nar_noise,
    car_matrix,
    mask_labels,
    measure_quality,
)
from .data import BiqualityDataset, LabeledSet, split_by_class, stratified_split, trusted_ratio
from .learner import ProbClassifier, TrainConfig, cross_entropy, evaluate, fit_weighted
from .reweighting import KmmConfig, diw_fit, irbl_fit, irbl_weights, kmm_weights, reweighted_risk
from .transfer import MtlConfig, mtl_fit, mtl_loss, tradaboost_fit

__version__ = "0.1.0"

__all__ = [
    "apply_label_noise",
    "apply_nar_noise",
    "backward_corrected_loss",
    "BiqualityDataset",
    "car_matrix",
    "CorrectionError",
    "CorrectionKind",
    "CorruptionSpec",
    "cross_entropy",
    "diw_fit",
    "estimate_T_anchor",
    "estimate_T_trusted",
    "evaluate",
    "find_anchors",
    "fit_weighted",
    "forward_corrected_probs",
    "glc_fit",
    "irbl_fit",
    "irbl_weights",
    "kmm_weights",
    "KmmConfig",
    "LabeledSet",
    "mask_labels",
    "measure_quality",
    "mtl_fit",
    "mtl_loss",
    "MtlConfig",
    "ProbClassifier",
    "reweighted_risk",
    "split_by_class",
    "stratified_split",
    "tradaboost_fit",
    "TrainConfig",
    "TransitionMatrix",
    "trusted_ratio",
]
