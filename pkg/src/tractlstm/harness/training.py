"""Mini-batch training loop and inference helpers."""

from __future__ import annotations

import logging

import numpy as np

from ..errors import DimensionMismatch
from ..nn import model as nnmodel
from ..nn.model import ModelParams
from ..nn.optim import AdamState, adam_step, clip_by_global_norm
from .data import Dataset, TrainConfig
from .metrics import macro_labels

log = logging.getLogger(__name__)

MACRO_THRESHOLD = 0.5


def targets(labels, level: str) -> np.ndarray:
    """Training targets: macro -> 0 grey / 1 white, micro -> tract 1..8 as 0..7."""
    labels = np.asarray(labels)
    if level == "macro":
        return macro_labels(labels)
    if np.any(labels == 0):
        raise ValueError("micro-level data must contain white-matter fibers only")
    return labels - 1


def predict_proba(params: ModelParams, d: Dataset, batch_size: int = 256) -> np.ndarray:
    out = []
    for start in range(0, len(d), batch_size):
        sl = slice(start, start + batch_size)
        out.append(nnmodel.forward(params, d.coords[sl], d.valid[sl]))
    if not out:
        shape = (0,) if params.head_kind == "sigmoid" else (0, params.head_W.shape[0])
        return np.zeros(shape)
    return np.concatenate(out)


def decide(probs: np.ndarray, head_kind: str) -> np.ndarray:
    """Macro: white iff p >= 0.5.  Micro: argmax, lowest index on ties."""
    if head_kind == "sigmoid":
        return (probs >= MACRO_THRESHOLD).astype(np.int64)
    return np.argmax(probs, axis=-1).astype(np.int64)


def _mean_loss(params, probs, y):
    if params.head_kind == "sigmoid":
        return float(np.mean(nnmodel.binary_cross_entropy(probs, y)))
    return float(np.mean(nnmodel.categorical_cross_entropy(probs, y)))


def evaluate_loss(params: ModelParams, d: Dataset, level: str, batch_size: int = 256):
    """``(mean loss, accuracy)`` of ``params`` on ``d`` at ``level``."""
    y = targets(d.labels, level)
    probs = predict_proba(params, d, batch_size)
    return _mean_loss(params, probs, y), float(np.mean(decide(probs, params.head_kind) == y))


def train(cfg: TrainConfig, train_set: Dataset, val_set: Dataset, level: str | None = None):
    """Fit a model and return ``(best_params, history)``.

    ``history`` holds one dict per epoch with training loss/accuracy (running
    averages over the epoch's batches) and validation loss/accuracy.  The
    returned parameters are those of the epoch with the best validation
    accuracy, the earliest such epoch on ties.
    """
    level = level or cfg.level
    cfg.validate()
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    y_train = targets(train_set.labels, level)
    if cfg.normalize_inputs:
        shift, std = train_set.point_stats()
        scale = 1.0 / std if std > 0 else 1.0
    else:
        shift, scale = None, cfg.input_scale
    params = nnmodel.init_params(cfg.model_config(level), cfg.seed, input_scale=scale, input_shift=shift)
    if train_set.coords.shape[2] != params.bi_fwd.input_size:
        raise DimensionMismatch("training data feature size does not match the model")
    opt = AdamState.for_params(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.epsilon)
    rng = np.random.default_rng([cfg.seed, 2])
    history = []
    best, best_acc = params.copy(), -1.0
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        loss_sum = correct = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            x, m, y = train_set.coords[idx], train_set.valid[idx], y_train[idx]
            loss, grads, probs = nnmodel.loss_and_grad(params, x, m, y, return_probs=True)
            clip_by_global_norm(grads, cfg.clip_norm)
            correct += float(np.sum(decide(probs, params.head_kind) == y))
            loss_sum += loss * len(idx)
            adam_step(opt, params, grads)
        val_loss, val_acc = evaluate_loss(params, val_set, level, cfg.eval_batch_size)
        row = dict(epoch=epoch, train_loss=loss_sum / n, train_acc=correct / n,
                   val_loss=val_loss, val_acc=val_acc)
        history.append(row)
        log.info("%s epoch %d: loss %.4f acc %.4f | val loss %.4f acc %.4f", level, epoch,
                 row["train_loss"], row["train_acc"], val_loss, val_acc)
        if val_acc > best_acc:
            best, best_acc = params.copy(), val_acc
    return best, history
