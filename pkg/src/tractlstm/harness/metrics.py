"""Accuracy, white-fiber recall and confusion counts."""

from __future__ import annotations

import numpy as np

from ..errors import EmptyInput, NoWhiteFibers


def _pair(pred, true):
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise ValueError(f"prediction/label length mismatch: {pred.shape} vs {true.shape}")
    return pred, true


def accuracy(pred, true) -> float:
    """Fraction of fibers whose predicted label equals the true one."""
    pred, true = _pair(pred, true)
    if pred.size == 0:
        raise EmptyInput("accuracy of an empty set")
    return float(np.count_nonzero(pred == true)) / pred.size


def recall_white(pred, true) -> float:
    """Share of truly white fibers (macro label 1) that were predicted white.

    Grey-matter recall is deliberately not reported: grey fibers dominate
    every brain, so it says little about the minority classes.
    """
    pred, true = _pair(pred, true)
    white = true == 1
    n_white = int(np.count_nonzero(white))
    if n_white == 0:
        raise NoWhiteFibers("no white fibers among the true labels")
    return float(np.count_nonzero(pred[white] == 1)) / n_white


def confusion_matrix(pred, true, n_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    pred, true = _pair(pred, true)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (true.astype(int), pred.astype(int)), 1)
    return cm


def macro_labels(labels) -> np.ndarray:
    """0 stays grey, 1..8 collapse to white (1)."""
    return (np.asarray(labels) != 0).astype(np.int64)
