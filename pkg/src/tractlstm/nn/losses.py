"""Cross-entropy losses and their gradients w.r.t. the pre-activation logits."""

from __future__ import annotations

import numpy as np

from ..errors import BadClassIndex

EPS = 1e-7


def binary_cross_entropy(p, y):
    """``-[y ln p + (1-y) ln(1-p)]`` with ``p`` clamped to ``[EPS, 1-EPS]``.

    Elementwise; returns a float for scalar input.
    """
    p = np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)
    y = np.asarray(y, dtype=np.float64)
    out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(out) if out.ndim == 0 else out


def categorical_cross_entropy(p, y):
    """``-ln p[y]`` with probabilities clamped below at ``EPS``.

    ``p`` is one probability vector (or a batch of them along the last axis),
    ``y`` the matching class index (or indices).
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y)
    k = p.shape[-1]
    if np.any(y < 0) or np.any(y >= k) or not np.issubdtype(y.dtype, np.integer):
        raise BadClassIndex(f"class index {y} outside 0..{k - 1}")
    picked = np.take_along_axis(p, y[..., None], axis=-1)[..., 0]
    out = -np.log(np.maximum(picked, EPS))
    return float(out) if out.ndim == 0 else out


def bce_logit_grad(p, y):
    """d loss / d logit for a sigmoid output ``p``.  Zero where the clamp is active."""
    p = np.asarray(p, dtype=np.float64)
    inside = (p > EPS) & (p < 1.0 - EPS)
    return np.where(inside, p - y, 0.0)


def cce_logit_grad(p, y):
    """d loss / d logits for a softmax output ``p`` (rows) and integer targets ``y``."""
    p = np.asarray(p, dtype=np.float64)
    rows = np.arange(p.shape[0])
    g = p.copy()
    g[rows, y] -= 1.0
    active = p[rows, y] > EPS
    return g * active[:, None]
