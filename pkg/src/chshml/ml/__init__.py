"""Classifiers for behaviour membership: SMO-trained SVM and a dense network."""

from .losses import (
    FocalLossParams,
    SingleClassBatch,
    balanced_accuracy,
    balanced_bce,
    binary_metrics,
    focal_loss,
)
from .mlp import DivergedLoss, MLPClassifier
from .serialization import load_model, model_from_dict, model_to_dict, save_model
from .svm import MaxPasses, SVMClassifier, rbf_kernel, smo
from .training import (
    DimensionMismatch,
    SplitDataset,
    canonical_image,
    composite_full8_predict,
    predict,
    split_dataset,
    train_mlp,
    train_svm,
)

__all__ = [
    "DimensionMismatch",
    "DivergedLoss",
    "FocalLossParams",
    "MLPClassifier",
    "MaxPasses",
    "SVMClassifier",
    "SingleClassBatch",
    "SplitDataset",
    "balanced_accuracy",
    "balanced_bce",
    "binary_metrics",
    "canonical_image",
    "composite_full8_predict",
    "focal_loss",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "predict",
    "rbf_kernel",
    "save_model",
    "smo",
    "split_dataset",
    "train_mlp",
    "train_svm",
]
