"""Stacked BiLSTM/LSTM classifier: parameters, forward pass and gradients."""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import BadConfig, DimensionMismatch, NonFiniteGradient
from . import layers
from .layers import LstmCellParams
from .losses import bce_logit_grad, binary_cross_entropy, categorical_cross_entropy, cce_logit_grad

HEAD_KINDS = ("sigmoid", "softmax")
MAX_SANE_DEPTH = 8


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 3
    bilstm_hidden: int = 64
    lstm_hidden: tuple[int, ...] = (64, 32, 16)
    dense_hidden: int = 0  # 0 disables the extra fully connected layer
    head_kind: str = "sigmoid"
    n_classes: int = 8

    def validate(self):
        problems = []
        if self.input_size < 1:
            problems.append("input_size must be >= 1")
        if self.bilstm_hidden < 1:
            problems.append("bilstm_hidden must be >= 1")
        if not self.lstm_hidden:
            problems.append("lstm_hidden needs at least one layer")
        if any(h < 1 for h in self.lstm_hidden):
            problems.append("every lstm_hidden entry must be >= 1")
        if self.dense_hidden < 0:
            problems.append("dense_hidden must be >= 0")
        if self.head_kind not in HEAD_KINDS:
            problems.append(f"head_kind must be one of {HEAD_KINDS}")
        if self.head_kind == "softmax" and self.n_classes < 2:
            problems.append("softmax head needs n_classes >= 2")
        if problems:
            raise BadConfig(problems)
        depth = 1 + len(self.lstm_hidden)
        if depth > MAX_SANE_DEPTH:
            warnings.warn(f"{depth} recurrent layers; stacks deeper than {MAX_SANE_DEPTH} train very poorly",
                          stacklevel=2)

    @property
    def output_size(self) -> int:
        return 1 if self.head_kind == "sigmoid" else self.n_classes


@dataclass(eq=False)
class ModelParams:
    bi_fwd: LstmCellParams
    bi_bwd: LstmCellParams
    stack: list[LstmCellParams]
    head_W: np.ndarray
    head_b: np.ndarray
    head_kind: str
    dense_W: np.ndarray | None = None
    dense_b: np.ndarray | None = None
    input_scale: float = 1.0
    input_shift: np.ndarray | None = None  # subtracted before scaling

    def __post_init__(self):
        if self.input_shift is None:
            self.input_shift = np.zeros(self.bi_fwd.input_size)
        self.input_shift = np.asarray(self.input_shift, dtype=np.float64)
        if self.head_kind not in HEAD_KINDS:
            raise BadConfig(f"unknown head kind {self.head_kind!r}")
        if self.bi_fwd.hidden_size != self.bi_bwd.hidden_size:
            raise DimensionMismatch("BiLSTM directions differ in hidden size")
        if not self.stack:
            raise DimensionMismatch("at least one unidirectional LSTM layer is required")
        width = 2 * self.bi_fwd.hidden_size
        for k, cell in enumerate(self.stack):
            if cell.input_size != width:
                raise DimensionMismatch(f"stack layer {k} expects {cell.input_size} inputs, gets {width}")
            width = cell.hidden_size
        if self.dense_W is not None:
            if self.dense_W.shape[1] != width:
                raise DimensionMismatch("dense layer does not match the last recurrent layer")
            width = self.dense_W.shape[0]
        if self.head_W.shape[1] != width or self.head_b.shape != (self.head_W.shape[0],):
            raise DimensionMismatch("head does not match its input width")
        if self.head_kind == "sigmoid" and self.head_W.shape[0] != 1:
            raise DimensionMismatch("sigmoid head must have one output")

    @property
    def config(self) -> ModelConfig:
        return ModelConfig(
            input_size=self.bi_fwd.input_size,
            bilstm_hidden=self.bi_fwd.hidden_size,
            lstm_hidden=tuple(c.hidden_size for c in self.stack),
            dense_hidden=0 if self.dense_W is None else self.dense_W.shape[0],
            head_kind=self.head_kind,
            n_classes=self.head_W.shape[0] if self.head_kind == "softmax" else 8,
        )

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Every trainable tensor in a fixed order."""
        out = []
        for prefix, cell in [("bi_fwd", self.bi_fwd), ("bi_bwd", self.bi_bwd)] + \
                [(f"lstm{k}", c) for k, c in enumerate(self.stack)]:
            out.extend((f"{prefix}.{n}", getattr(cell, n)) for n in cell.names)
        if self.dense_W is not None:
            out += [("dense.W", self.dense_W), ("dense.b", self.dense_b)]
        out += [("head.W", self.head_W), ("head.b", self.head_b)]
        return out

    def arrays(self) -> list[np.ndarray]:
        return [a for _, a in self.named_arrays()]

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def zeros_like(self) -> "ModelParams":
        z = self.copy()
        for a in z.arrays():
            a[...] = 0.0
        return z

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())


def init_params(config: ModelConfig, seed: int, input_scale: float = 1.0,
                input_shift=None) -> ModelParams:
    """Glorot-uniform weights, zero biases, forget-gate bias 1."""
    config.validate()
    rng = np.random.default_rng(seed)

    def uniform(fan_out, fan_in):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in))

    def cell(hidden, n_in):
        Ws = [uniform(hidden, hidden + n_in) for _ in range(4)]
        bs = [np.zeros(hidden) for _ in range(4)]
        bs[0][:] = 1.0
        return LstmCellParams(*Ws, *bs)

    fwd = cell(config.bilstm_hidden, config.input_size)
    bwd = cell(config.bilstm_hidden, config.input_size)
    width = 2 * config.bilstm_hidden
    stack = []
    for h in config.lstm_hidden:
        stack.append(cell(h, width))
        width = h
    dense_W = dense_b = None
    if config.dense_hidden:
        dense_W = uniform(config.dense_hidden, width)
        dense_b = np.zeros(config.dense_hidden)
        width = config.dense_hidden
    head_W = uniform(config.output_size, width)
    head_b = np.zeros(config.output_size)
    return ModelParams(fwd, bwd, stack, head_W, head_b, config.head_kind,
                       dense_W, dense_b, input_scale=float(input_scale), input_shift=input_shift)


def _trim(x, mask):
    # trailing all-masked steps only carry state; dropping them is exact
    t_eff = layers._effective_length(mask)
    return x[:, :t_eff], mask[:, :t_eff]


def forward(params: ModelParams, x, mask, return_cache: bool = False):
    """Class probabilities for a batch.

    ``x`` is ``(B, T, input)`` in raw units, ``mask`` the ``(B, T)`` validity
    flags.  Inputs are normalized as ``(x - input_shift) * input_scale``;
    padded steps stay at zero.  Returns ``(B,)`` for a
    sigmoid head and ``(B, K)`` for a softmax head.
    """
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if x.ndim == 2:
        x, mask = x[None], mask[None]
    if x.shape[2] != params.bi_fwd.input_size or mask.shape != x.shape[:2]:
        raise DimensionMismatch(f"batch {x.shape} / mask {mask.shape} do not fit the model")
    x, mask = _trim(x, mask)
    x = (x - params.input_shift) * params.input_scale * mask[..., None]
    seq, bi_cache = layers._bilstm_forward(params.bi_fwd, params.bi_bwd, x, mask)
    caches = []
    for cell in params.stack:
        seq, state, c = layers._layer_forward(cell, seq, mask)
        caches.append(c)
    feat = state.h
    dense_out = None
    if params.dense_W is not None:
        dense_out = layers.sigmoid(feat @ params.dense_W.T + params.dense_b)
        top = dense_out
    else:
        top = feat
    logits = top @ params.head_W.T + params.head_b
    if params.head_kind == "sigmoid":
        probs = layers.sigmoid(logits[:, 0])
    else:
        probs = layers.softmax(logits)
    if not return_cache:
        return probs
    cache = dict(bi=bi_cache, stack=caches, feat=feat, dense_out=dense_out, top=top,
                 probs=probs, seq_len=seq.shape[1], mask=mask)
    return probs, cache


def loss_value(params: ModelParams, x, mask, y) -> float:
    probs = forward(params, x, mask)
    if params.head_kind == "sigmoid":
        return float(np.mean(binary_cross_entropy(probs, y)))
    return float(np.mean(categorical_cross_entropy(probs, np.asarray(y))))


def loss_and_grad(params: ModelParams, x, mask, y, return_probs: bool = False):
    """Mean batch loss and its gradient, returned as a ``ModelParams`` mirror.

    With ``return_probs`` the forward-pass outputs are returned as a third
    element.  Raises :class:`NonFiniteGradient` if any gradient entry is NaN or inf.
    """
    y = np.asarray(y)
    probs, cache = forward(params, x, mask, return_cache=True)
    B = probs.shape[0]
    if params.head_kind == "sigmoid":
        loss = float(np.mean(binary_cross_entropy(probs, y)))
        dlogits = (bce_logit_grad(probs, y) / B)[:, None]
    else:
        loss = float(np.mean(categorical_cross_entropy(probs, y)))
        dlogits = cce_logit_grad(probs, y) / B

    grads = params.zeros_like()
    top = cache["top"]
    grads.head_W[...] = dlogits.T @ top
    grads.head_b[...] = dlogits.sum(axis=0)
    dtop = dlogits @ params.head_W
    if params.dense_W is not None:
        d = cache["dense_out"]
        da = dtop * d * (1.0 - d)
        grads.dense_W[...] = da.T @ cache["feat"]
        grads.dense_b[...] = da.sum(axis=0)
        dfeat = da @ params.dense_W
    else:
        dfeat = dtop

    # only the last layer's final state feeds the head; lower layers are
    # reached through their emitted sequences
    dseq = np.zeros((B, cache["seq_len"], params.stack[-1].hidden_size))
    dh_final = dfeat
    for k in range(len(params.stack) - 1, -1, -1):
        dseq, dW, db, _ = layers._layer_backward(cache["stack"][k], dseq, dh_final=dh_final)
        dh_final = None
        g = LstmCellParams.from_stacked(dW, db)
        for n in LstmCellParams.names:
            getattr(grads.stack[k], n)[...] = getattr(g, n)
    _, (dWf, dbf), (dWb, dbb) = layers._bilstm_backward(cache["bi"], dseq)
    for target, (dW, db) in ((grads.bi_fwd, (dWf, dbf)), (grads.bi_bwd, (dWb, dbb))):
        g = LstmCellParams.from_stacked(dW, db)
        for n in LstmCellParams.names:
            getattr(target, n)[...] = getattr(g, n)

    for name, a in grads.named_arrays():
        if not np.all(np.isfinite(a)):
            raise NonFiniteGradient(f"non-finite gradient in {name}")
    if return_probs:
        return loss, grads, probs
    return loss, grads
