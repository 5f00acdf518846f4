"""Datasets of preprocessed fibers and the train/validation/test split."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from ..errors import BadConfig, CountMismatch, EmptySplit
from ..nn.model import ModelConfig
from ..pruning import MASK_VALUE, MaskedSequence, preprocess
from ..trk_io import N_LABELS, Tractogram

LEVELS = ("macro", "micro")
PROTOCOLS = ("intra", "inter", "merged")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 64
    train_fraction: float = 0.4
    val_fraction: float = 0.2
    seed: int = 0
    level: str = "macro"
    bilstm_hidden: int = 64
    lstm_hidden: tuple[int, ...] = (64, 32, 16)
    dense_hidden: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0
    normalize_inputs: bool = True  # fit shift/scale on the training set
    input_scale: float = 0.01  # used only when normalize_inputs is off
    keep_fraction: float = 0.75
    max_len: int = 100
    merged_train_fraction: float = 0.5
    inter_train_index: int = 1  # the second brain, zero-based
    inter_test_fraction: float = 1.0
    eval_batch_size: int = 256

    def problems(self) -> list[str]:
        out = []
        if self.epochs < 1:
            out.append("epochs must be >= 1")
        if self.batch_size < 1:
            out.append("batch_size must be >= 1")
        for name in ("train_fraction", "val_fraction", "merged_train_fraction"):
            if not 0.0 < getattr(self, name) < 1.0:
                out.append(f"{name} must lie strictly between 0 and 1")
        if not 0.0 < self.inter_test_fraction <= 1.0:
            out.append("inter_test_fraction must lie in (0, 1]")
        if not 0.0 < self.keep_fraction <= 1.0:
            out.append("keep_fraction must lie in (0, 1]")
        if self.level not in LEVELS:
            out.append(f"level must be one of {LEVELS}")
        if self.max_len < 1:
            out.append("max_len must be >= 1")
        if self.lr <= 0:
            out.append("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            out.append("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            out.append("epsilon must be positive")
        if self.input_scale <= 0:
            out.append("input_scale must be positive")
        if self.inter_train_index < 0:
            out.append("inter_train_index must be >= 0")
        if self.eval_batch_size < 1:
            out.append("eval_batch_size must be >= 1")
        try:
            self.model_config("macro").validate()
        except BadConfig as exc:
            out.extend(exc.problems)
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise BadConfig(problems)

    def model_config(self, level: str | None = None) -> ModelConfig:
        level = level or self.level
        return ModelConfig(
            input_size=3, bilstm_hidden=self.bilstm_hidden, lstm_hidden=tuple(self.lstm_hidden),
            dense_hidden=self.dense_hidden, head_kind="sigmoid" if level == "macro" else "softmax",
            n_classes=N_LABELS - 1,
        )

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}


@dataclass(eq=False)
class Dataset:
    """Preprocessed fibers of one brain (or a pool of brains).

    ``ids`` identify each fiber as ``(brain_index, fiber_index)`` so splits
    can be checked for disjointness.
    """

    coords: np.ndarray  # (N, T, 3)
    valid: np.ndarray  # (N, T)
    labels: np.ndarray  # (N,)
    brain_id: str = "B1"
    ids: np.ndarray = field(default=None)  # (N, 2)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.labels.shape[0]
        if self.coords.shape[0] != n or self.valid.shape[0] != n:
            raise CountMismatch("coords, valid flags and labels differ in length")
        if n and (self.labels.min() < 0 or self.labels.max() >= N_LABELS):
            raise ValueError("labels must lie in 0..8")
        if self.ids is None:
            self.ids = np.stack([np.zeros(n, dtype=np.int64), np.arange(n)], axis=1)

    def __len__(self):
        return self.labels.shape[0]

    @classmethod
    def from_tractogram(cls, t: Tractogram, labels, brain_id: str = "B1", brain_index: int = 0,
                        keep_fraction: float = 0.75, max_len: int = 100,
                        mask_value: float = MASK_VALUE) -> "Dataset":
        labels = list(labels)
        if len(labels) != len(t.fibers):
            raise CountMismatch(f"{len(labels)} labels for {len(t.fibers)} fibers")
        seqs = [preprocess(f, keep_fraction, max_len, mask_value) for f in t.fibers]
        return cls.from_sequences(seqs, labels, brain_id, brain_index)

    @classmethod
    def from_sequences(cls, seqs: list[MaskedSequence], labels, brain_id="B1", brain_index=0):
        n = len(seqs)
        T = seqs[0].coords.shape[0] if seqs else 1
        coords = np.stack([s.coords for s in seqs]) if seqs else np.zeros((0, T, 3))
        valid = np.stack([s.valid for s in seqs]) if seqs else np.zeros((0, T), bool)
        ids = np.stack([np.full(n, brain_index), np.arange(n)], axis=1)
        return cls(coords, valid, labels, brain_id, ids)

    def point_stats(self) -> tuple[np.ndarray, float]:
        """Mean point and pooled coordinate standard deviation over valid steps."""
        pts = self.coords[self.valid]
        mean = pts.mean(axis=0)
        std = float(np.sqrt(np.mean((pts - mean) ** 2)))
        return mean, std

    @property
    def sequences(self) -> list[MaskedSequence]:
        return [MaskedSequence(c, v) for c, v in zip(self.coords, self.valid)]

    def subset(self, idx, brain_id: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.coords[idx], self.valid[idx], self.labels[idx],
                       brain_id or self.brain_id, self.ids[idx])

    def white(self) -> "Dataset":
        return self.subset(np.flatnonzero(self.labels != 0))

    @staticmethod
    def concat(parts: list["Dataset"], brain_id: str) -> "Dataset":
        return Dataset(np.concatenate([p.coords for p in parts]),
                       np.concatenate([p.valid for p in parts]),
                       np.concatenate([p.labels for p in parts]), brain_id,
                       np.concatenate([p.ids for p in parts]))


def split_sizes(n: int, train_fraction: float, val_fraction: float) -> tuple[int, int, int]:
    """``(train, val, test)`` counts: floor rounding with a minimum of one for
    the training pool and for the validation share taken from it."""
    pool = max(1, math.floor(round(train_fraction * n, 9)))
    val = max(1, math.floor(round(val_fraction * pool, 9)))
    return pool - val, val, n - pool


def split_train_val(d: Dataset, cfg: TrainConfig) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle, then training pool / validation share / held-out test."""
    if len(d) == 0:
        raise EmptySplit("dataset is empty")
    n_train, n_val, n_test = split_sizes(len(d), cfg.train_fraction, cfg.val_fraction)
    if min(n_train, n_val, n_test) <= 0:
        raise EmptySplit(f"split of {len(d)} fibers gives train/val/test = {n_train}/{n_val}/{n_test}")
    perm = np.random.default_rng([cfg.seed, 1]).permutation(len(d))
    return (d.subset(perm[:n_train]), d.subset(perm[n_train:n_train + n_val]),
            d.subset(perm[n_train + n_val:]))
