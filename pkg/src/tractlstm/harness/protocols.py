"""Intra-, inter- and merged-brain evaluation with hierarchical prediction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import BadProtocolConfig, DimensionMismatch, EmptySplit
from ..nn import model as nnmodel
from ..nn.model import ModelParams
from .data import PROTOCOLS, Dataset, TrainConfig, split_sizes, split_train_val
from .metrics import accuracy, confusion_matrix, macro_labels, recall_white
from .training import decide, predict_proba, train

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    protocol: str
    level: str  # "macro", "micro" or "hierarchical"
    brain: str  # test brain, or "merged"
    accuracy: float
    recall_white: float | None
    confusion: np.ndarray
    n_test: int
    train_brain: str = ""
    history: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.confusion = np.asarray(self.confusion, dtype=np.int64)
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy outside [0, 1]")
        if self.recall_white is not None and not 0.0 <= self.recall_white <= 1.0:
            raise ValueError("recall outside [0, 1]")
        if int(self.confusion.sum()) != self.n_test:
            raise ValueError("confusion counts do not sum to the number of test fibers")

    def to_dict(self) -> dict:
        return dict(protocol=self.protocol, level=self.level, brain=self.brain,
                    train_brain=self.train_brain, accuracy=self.accuracy,
                    recall_white=self.recall_white, n_test=self.n_test,
                    confusion=self.confusion.tolist(), history=self.history)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(protocol=d["protocol"], level=d["level"], brain=d["brain"],
                   accuracy=d["accuracy"], recall_white=d["recall_white"],
                   confusion=np.asarray(d["confusion"]), n_test=d["n_test"],
                   train_brain=d.get("train_brain", ""), history=d.get("history", []))


def hierarchical_predict(macro: ModelParams, micro: ModelParams, coords, valid) -> np.ndarray:
    """Labels 0..8 for a batch: grey unless the macro head says white (p >= 0.5),
    in which case the micro argmax (ties -> lowest index) shifted to 1..8."""
    coords = np.asarray(coords)
    valid = np.asarray(valid)
    single = coords.ndim == 2
    if single:
        coords, valid = coords[None], valid[None]
    if macro.bi_fwd.input_size != micro.bi_fwd.input_size:
        raise DimensionMismatch("macro and micro models disagree on input size")
    if macro.head_kind != "sigmoid" or micro.head_kind != "softmax":
        raise DimensionMismatch("expected a sigmoid macro head and a softmax micro head")
    white = decide(nnmodel.forward(macro, coords, valid), "sigmoid") == 1
    out = np.zeros(coords.shape[0], dtype=np.int64)
    if white.any():
        out[white] = decide(nnmodel.forward(micro, coords[white], valid[white]), "softmax") + 1
    return int(out[0]) if single else out


def predict_labels(macro: ModelParams, micro: ModelParams, d: Dataset, batch_size: int = 256) -> np.ndarray:
    parts = [hierarchical_predict(macro, micro, d.coords[s:s + batch_size], d.valid[s:s + batch_size])
             for s in range(0, len(d), batch_size)]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def evaluate_models(macro: ModelParams, micro: ModelParams, test: Dataset, protocol: str,
                    brain: str, train_brain: str = "", histories=(None, None),
                    batch_size: int = 256) -> list[EvalReport]:
    """Macro report on all of ``test``, micro report on its true-white fibers,
    and an end-to-end hierarchical report on all of it."""
    reports = []
    y_macro = macro_labels(test.labels)
    p_macro = decide(predict_proba(macro, test, batch_size), "sigmoid")
    rec = recall_white(p_macro, y_macro) if np.any(y_macro == 1) else None
    reports.append(EvalReport(protocol, "macro", brain, accuracy(p_macro, y_macro), rec,
                              confusion_matrix(p_macro, y_macro, 2), len(test), train_brain,
                              list(histories[0] or [])))
    white = test.white()
    if len(white):
        p_micro = decide(predict_proba(micro, white, batch_size), "softmax") + 1
        reports.append(EvalReport(protocol, "micro", brain, accuracy(p_micro, white.labels), None,
                                  confusion_matrix(p_micro, white.labels, 9), len(white), train_brain,
                                  list(histories[1] or [])))
    p_all = predict_labels(macro, micro, test, batch_size)
    reports.append(EvalReport(protocol, "hierarchical", brain, accuracy(p_all, test.labels), None,
                              confusion_matrix(p_all, test.labels, 9), len(test), train_brain))
    return reports


class ProtocolRunner:
    """Runs protocols over a fixed list of brains, reusing trained models.

    Intra-brain training on brain *k* and inter-brain training with *k* as
    the designated training brain are the same run, so it is done once.
    """

    def __init__(self, datasets: list[Dataset], cfg: TrainConfig):
        cfg.validate()
        if not datasets:
            raise BadProtocolConfig("no datasets given")
        self.datasets = datasets
        self.cfg = cfg
        self._models: dict = {}
        self.splits: dict = {}

    def _fit(self, key, train_set: Dataset, val_set: Dataset):
        if key not in self._models:
            log.info("training %s on %s (%d train / %d val fibers)", key[1], key[0], len(train_set), len(val_set))
            self._models[key] = train(self.cfg, train_set, val_set, key[1])
        return self._models[key]

    def _models_for(self, tag: str, train_set: Dataset, val_set: Dataset):
        macro = self._fit((tag, "macro"), train_set, val_set)
        w_train, w_val = train_set.white(), val_set.white()
        if len(w_train) == 0 or len(w_val) == 0:
            raise EmptySplit(f"{tag}: no white-matter fibers in the training or validation split")
        micro = self._fit((tag, "micro"), w_train, w_val)
        return macro, micro

    def _brain_split(self, k: int):
        if k not in self.splits:
            self.splits[k] = split_train_val(self.datasets[k], self.cfg)
        return self.splits[k]

    def intra(self) -> list[EvalReport]:
        out = []
        for k, d in enumerate(self.datasets):
            tr, va, te = self._brain_split(k)
            (macro, hm), (micro, hu) = self._models_for(f"brain:{d.brain_id}", tr, va)
            out += evaluate_models(macro, micro, te, "intra", d.brain_id, d.brain_id, (hm, hu),
                                   self.cfg.eval_batch_size)
        return out

    def inter(self) -> list[EvalReport]:
        k = self.cfg.inter_train_index
        if len(self.datasets) < 2:
            raise BadProtocolConfig("inter-brain testing needs at least two brains")
        if k >= len(self.datasets):
            raise BadProtocolConfig(f"inter_train_index {k} out of range for {len(self.datasets)} brains")
        src = self.datasets[k]
        tr, va, _ = self._brain_split(k)
        (macro, hm), (micro, hu) = self._models_for(f"brain:{src.brain_id}", tr, va)
        out = []
        for j, d in enumerate(self.datasets):
            if j == k:
                continue
            test = d
            if self.cfg.inter_test_fraction < 1.0:
                n = max(1, math.floor(self.cfg.inter_test_fraction * len(d)))
                perm = np.random.default_rng([self.cfg.seed, 3, j]).permutation(len(d))
                test = d.subset(np.sort(perm[:n]))
            out += evaluate_models(macro, micro, test, "inter", d.brain_id, src.brain_id, (hm, hu),
                                   self.cfg.eval_batch_size)
        return out

    def merged_split(self) -> tuple[Dataset, Dataset, Dataset]:
        """Half of every brain (after shuffling) forms the training pool, the
        rest is pooled for testing; the pool then gives up its validation share."""
        pools, tests = [], []
        for j, d in enumerate(self.datasets):
            perm = np.random.default_rng([self.cfg.seed, 4, j]).permutation(len(d))
            n = max(1, math.floor(round(self.cfg.merged_train_fraction * len(d), 9)))
            pools.append(d.subset(perm[:n]))
            tests.append(d.subset(perm[n:]))
        pool = Dataset.concat(pools, "merged")
        test = Dataset.concat(tests, "merged")
        perm = np.random.default_rng([self.cfg.seed, 5]).permutation(len(pool))
        n_val = max(1, math.floor(round(self.cfg.val_fraction * len(pool), 9)))
        if len(test) == 0 or n_val >= len(pool):
            raise EmptySplit("merged split leaves an empty partition")
        return pool.subset(perm[n_val:]), pool.subset(perm[:n_val]), test

    def merged(self) -> list[EvalReport]:
        tr, va, te = self.merged_split()
        (macro, hm), (micro, hu) = self._models_for("merged", tr, va)
        return evaluate_models(macro, micro, te, "merged", "merged", "merged", (hm, hu),
                               self.cfg.eval_batch_size)

    def run(self, protocol: str) -> list[EvalReport]:
        if protocol not in PROTOCOLS:
            raise BadProtocolConfig(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
        return getattr(self, protocol)()

    def model(self, tag: str, level: str) -> ModelParams:
        return self._models[(tag, level)][0]


def run_protocol(protocol: str, datasets: list[Dataset], cfg: TrainConfig) -> list[EvalReport]:
    """Train and evaluate under one protocol; see :class:`ProtocolRunner`."""
    return ProtocolRunner(datasets, cfg).run(protocol)


__all__ = ["EvalReport", "ProtocolRunner", "evaluate_models", "hierarchical_predict",
           "predict_labels", "run_protocol", "split_sizes"]
