"""LSTM, bidirectional LSTM and dense layers with hand-written backward passes.

Shapes follow the convention ``(batch, time, features)``.  A boolean
``mask`` of shape ``(batch, time)`` marks valid steps; at a masked step the
recurrent state is carried through unchanged and the emitted hidden vector
is the carried one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..errors import DimensionMismatch

GATES = ("f", "i", "C", "o")


def sigmoid(z):
    # split on the sign so neither branch overflows or cancels
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


@dataclass(eq=False)
class LstmCellParams:
    """Gate weights act on the concatenation ``[h_prev, x_t]`` (hidden part first)."""

    W_f: np.ndarray
    W_i: np.ndarray
    W_C: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_C: np.ndarray
    b_o: np.ndarray

    names = ("W_f", "W_i", "W_C", "W_o", "b_f", "b_i", "b_C", "b_o")

    def __post_init__(self):
        ws = [self.W_f, self.W_i, self.W_C, self.W_o]
        bs = [self.b_f, self.b_i, self.b_C, self.b_o]
        if len({w.shape for w in ws}) != 1 or len({b.shape for b in bs}) != 1:
            raise DimensionMismatch("all gate weights (and all gate biases) must share one shape")
        h, hi = self.W_f.shape
        if self.b_f.shape != (h,) or hi <= h:
            raise DimensionMismatch(f"weights {self.W_f.shape} and bias {self.b_f.shape} are inconsistent")

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    def arrays(self):
        return [getattr(self, n) for n in self.names]

    def stacked(self):
        """Gate weights as one ``(4H, H+I)`` matrix and ``(4H,)`` bias, order f, i, C, o."""
        W = np.concatenate([self.W_f, self.W_i, self.W_C, self.W_o], axis=0)
        b = np.concatenate([self.b_f, self.b_i, self.b_C, self.b_o])
        return W, b

    @classmethod
    def from_stacked(cls, W, b):
        Ws = np.split(W, 4, axis=0)
        bs = np.split(b, 4)
        return cls(*Ws, *bs)

    @classmethod
    def zeros(cls, hidden: int, input_size: int):
        return cls(*[np.zeros((hidden, hidden + input_size)) for _ in range(4)],
                   *[np.zeros(hidden) for _ in range(4)])


class LstmState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


def lstm_cell_forward(p: LstmCellParams, x_t, prev: LstmState) -> LstmState:
    """One LSTM step.  Works on a single vector or on a ``(batch, features)`` block."""
    x_t = np.asarray(x_t, dtype=np.float64)
    H = p.hidden_size
    if x_t.shape[-1] != p.input_size:
        raise DimensionMismatch(f"input has {x_t.shape[-1]} features, cell expects {p.input_size}")
    if prev.h.shape[-1] != H or prev.c.shape[-1] != H:
        raise DimensionMismatch(f"state size does not match hidden size {H}")
    W, b = p.stacked()
    z = np.concatenate([prev.h, x_t], axis=-1)
    a = z @ W.T + b
    f = sigmoid(a[..., :H])
    i = sigmoid(a[..., H:2 * H])
    g = np.tanh(a[..., 2 * H:3 * H])
    o = sigmoid(a[..., 3 * H:])
    c = f * prev.c + i * g
    return LstmState(o * np.tanh(c), c)


def _as_batch(x, mask):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if mask is None:
        mask = np.ones(x.shape[:2], dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if single:
            mask = mask[None]
    if x.ndim != 3 or mask.shape != x.shape[:2]:
        raise DimensionMismatch(f"input {x.shape} and mask {mask.shape} do not line up")
    return x, mask, single


def _effective_length(mask) -> int:
    """Index after the last step that is valid in any row (at least 1)."""
    cols = np.flatnonzero(mask.any(axis=0))
    return int(cols[-1]) + 1 if cols.size else 1


def _layer_forward(p: LstmCellParams, x, mask):
    """Batched forward pass over ``x`` (B, T, I); returns hidden sequence and cache."""
    B, T, I = x.shape
    H = p.hidden_size
    if I != p.input_size:
        raise DimensionMismatch(f"input has {I} features, layer expects {p.input_size}")
    W, b = p.stacked()
    Wh, Wx = W[:, :H], W[:, H:]
    # input projection for all steps at once
    ax = x @ Wx.T + b
    hs = np.empty((B, T, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hprev = np.empty((T, B, H))
    cprev = np.empty((T, B, H))
    gates = np.empty((T, B, 4 * H))
    tanh_c = np.empty((T, B, H))
    for t in range(T):
        hprev[t] = h
        cprev[t] = c
        a = ax[:, t] + h @ Wh.T
        act = gates[t]
        act[:, :2 * H] = sigmoid(a[:, :2 * H])
        act[:, 2 * H:3 * H] = np.tanh(a[:, 2 * H:3 * H])
        act[:, 3 * H:] = sigmoid(a[:, 3 * H:])
        f, i, g, o = act[:, :H], act[:, H:2 * H], act[:, 2 * H:3 * H], act[:, 3 * H:]
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        tanh_c[t] = tc
        h_new = o * tc
        m = mask[:, t, None]
        c = np.where(m, c_new, c)
        h = np.where(m, h_new, h)
        hs[:, t] = h
    cache = (x, mask, W, hprev, cprev, gates, tanh_c)
    return hs, LstmState(h, c), cache


def _layer_backward(cache, dhs, dh_final=None, dc_final=None):
    """Backpropagation through time for one layer.

    ``dhs`` is the loss gradient w.r.t. the emitted hidden sequence; the
    optional final-state gradients are added at the last step.  Returns the
    input gradient ``dx`` and the stacked weight/bias gradients.
    """
    x, mask, W, hprev, cprev, gates, tanh_c = cache
    B, T, I = x.shape
    H = W.shape[0] // 4
    Wh = W[:, :H]
    da_all = np.zeros((T, B, 4 * H))
    dh = np.zeros((B, H)) if dh_final is None else dh_final.copy()
    dc = np.zeros((B, H)) if dc_final is None else dc_final.copy()
    for t in range(T - 1, -1, -1):
        dh = dh + dhs[:, t]
        m = mask[:, t, None]
        act = gates[t]
        f, i, g, o = act[:, :H], act[:, H:2 * H], act[:, 2 * H:3 * H], act[:, 3 * H:]
        tc = tanh_c[t]
        dc_new = dc + dh * o * (1.0 - tc * tc)
        da = da_all[t]
        da[:, :H] = dc_new * cprev[t] * f * (1.0 - f)
        da[:, H:2 * H] = dc_new * g * i * (1.0 - i)
        da[:, 2 * H:3 * H] = dc_new * i * (1.0 - g * g)
        da[:, 3 * H:] = dh * tc * o * (1.0 - o)
        da *= m
        dh = np.where(m, da @ Wh, dh)
        dc = np.where(m, dc_new * f, dc)
    # weight gradients for all steps in one matmul, time-major layout
    z = np.concatenate([hprev, x.transpose(1, 0, 2)], axis=2).reshape(T * B, -1)
    da_flat = da_all.reshape(T * B, 4 * H)
    dW = da_flat.T @ z
    db = da_flat.sum(axis=0)
    dx = (da_flat @ W[:, H:]).reshape(T, B, I).transpose(1, 0, 2)
    return dx, dW, db, LstmState(dh, dc)


def lstm_layer_forward(p: LstmCellParams, seq, mask=None):
    """Run ``p`` over a sequence from a zero initial state.

    ``seq`` is ``(T, I)`` or ``(B, T, I)``.  Returns the hidden sequence and
    the final state (the state after the last valid step).
    """
    x, mask, single = _as_batch(seq, mask)
    T = x.shape[1]
    t_eff = _effective_length(mask)
    # trailing all-masked steps only carry the state; skipping them keeps
    # results bit-identical however much padding follows
    hs, state, _ = _layer_forward(p, x[:, :t_eff], mask[:, :t_eff])
    hs = np.concatenate([hs, np.repeat(state.h[:, None], T - t_eff, axis=1)], axis=1)
    if single:
        return hs[0], LstmState(state.h[0], state.c[0])
    return hs, state


def _bilstm_forward(fwd, bwd, x, mask):
    if fwd.hidden_size != bwd.hidden_size or fwd.input_size != bwd.input_size:
        raise DimensionMismatch("forward and backward cells must have identical shapes")
    hf, _, cf = _layer_forward(fwd, x, mask)
    # masks are prefixes, so the reversed pass meets the padding first and
    # carries a zero state through it
    hb, _, cb = _layer_forward(bwd, x[:, ::-1], mask[:, ::-1])
    out = np.concatenate([hf, hb[:, ::-1]], axis=2)
    return out, (cf, cb)


def _bilstm_backward(cache, dout):
    cf, cb = cache
    H = dout.shape[2] // 2
    dxf, dWf, dbf, _ = _layer_backward(cf, dout[:, :, :H])
    dxb, dWb, dbb, _ = _layer_backward(cb, dout[:, ::-1, H:])
    return dxf + dxb[:, ::-1], (dWf, dbf), (dWb, dbb)


def bilstm_forward(fwd: LstmCellParams, bwd: LstmCellParams, seq, mask=None):
    """Bidirectional layer; step ``t`` emits ``[h_fwd(t), h_bwd(t)]``."""
    x, mask, single = _as_batch(seq, mask)
    B, T, _ = x.shape
    t_eff = _effective_length(mask)
    out, _ = _bilstm_forward(fwd, bwd, x[:, :t_eff], mask[:, :t_eff])
    # padded tail: forward half carries its final state, backward half has
    # not seen a valid step yet and is still zero
    H = fwd.hidden_size
    tail = np.zeros((B, T - t_eff, 2 * H))
    tail[:, :, :H] = out[:, -1:, :H]
    out = np.concatenate([out, tail], axis=1)
    return out[0] if single else out


def dense_forward(W, b, x, kind: str = "linear"):
    """Affine map followed by ``kind`` in {"linear", "sigmoid", "softmax"}."""
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != W.shape[1] or np.shape(b) != (W.shape[0],):
        raise DimensionMismatch(f"dense weights {W.shape} cannot act on input {x.shape}")
    z = x @ W.T + b
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "softmax":
        return softmax(z)
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")
