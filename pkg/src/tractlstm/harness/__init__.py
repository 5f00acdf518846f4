"""Datasets, training loop, metrics and evaluation protocols."""

from .data import Dataset, TrainConfig, split_sizes, split_train_val
from .metrics import accuracy, confusion_matrix, macro_labels, recall_white
from .protocols import EvalReport, ProtocolRunner, evaluate_models, hierarchical_predict, run_protocol
from .training import decide, predict_proba, targets, train

__all__ = [
    "Dataset", "TrainConfig", "split_sizes", "split_train_val", "accuracy", "confusion_matrix",
    "macro_labels", "recall_white", "EvalReport", "ProtocolRunner", "evaluate_models",
    "hierarchical_predict", "run_protocol", "decide", "predict_proba", "targets", "train",
]
