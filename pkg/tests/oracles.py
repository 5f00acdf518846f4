"""Independent reference implementations used as test oracles.

Nothing here imports the package's numerics; each function is written
straight from the definitions with plain loops so it can be compared
against the vectorized code.
"""

from __future__ import annotations

import math
import struct

import numpy as np


# -- .trk byte assembly --------------------------------------------------------

def trk_header_bytes(n_count=0, hdr_size=1000, n_scalars=0, n_properties=0,
                     dim=(10, 20, 30), voxel_size=(1.0, 2.0, 3.0), magic=b"TRACK\x00"):
    """A TrackVis header assembled field by field with ``struct``."""
    buf = bytearray(1000)
    buf[0:6] = magic
    struct.pack_into("<3h", buf, 6, *dim)
    struct.pack_into("<3f", buf, 12, *voxel_size)
    struct.pack_into("<3f", buf, 24, 0.0, 0.0, 0.0)
    struct.pack_into("<h", buf, 36, n_scalars)
    struct.pack_into("<h", buf, 238, n_properties)
    struct.pack_into("<16f", buf, 440, *np.eye(4).ravel())
    buf[948:951] = b"RAS"
    struct.pack_into("<i", buf, 988, n_count)
    struct.pack_into("<i", buf, 992, 2)
    struct.pack_into("<i", buf, 996, hdr_size)
    return bytes(buf)


def trk_record_bytes(points, scalars=0, properties=0):
    out = struct.pack("<i", len(points))
    for p in points:
        out += struct.pack("<3f", *p) + struct.pack(f"<{scalars}f", *([7.0] * scalars))
    return out + struct.pack(f"<{properties}f", *([9.0] * properties))


def decode_trk(data: bytes):
    """Minimal independent decoder: list of point lists (float32 -> float)."""
    (ns,) = struct.unpack_from("<h", data, 36)
    (npr,) = struct.unpack_from("<h", data, 238)
    pos, fibers = 1000, []
    while pos < len(data):
        (n,) = struct.unpack_from("<i", data, pos)
        pos += 4
        pts = []
        for _ in range(n):
            vals = struct.unpack_from(f"<{3 + ns}f", data, pos)
            pos += 4 * (3 + ns)
            pts.append(vals[:3])
        pos += 4 * npr
        fibers.append(pts)
    return fibers


# -- curvature -------------------------------------------------------------------

def angle_between(u, v):
    nu = math.hypot(*u)
    nv = math.hypot(*v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    c = (u[0] * v[0] + u[1] * v[1]) / (nu * nv)
    return math.acos(max(-1.0, min(1.0, c)))


def curvature_brute(points):
    pts = [tuple(float(c) for c in p) for p in points]
    n = len(pts)
    planes = [(0, 1), (1, 2), (2, 0)]
    out = []
    for i in range(n):
        s = 0.0
        for k in (1, 4):
            if i - k < 0 or i + k >= n:
                continue
            for a, b in planes:
                u = (pts[i][a] - pts[i - k][a], pts[i][b] - pts[i - k][b])
                v = (pts[i + k][a] - pts[i][a], pts[i + k][b] - pts[i][b])
                s += angle_between(u, v)
        out.append(s)
    return out


# -- LSTM cell, written out one gate at a time --------------------------------

def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def lstm_cell_transcribed(W_f, W_i, W_C, W_o, b_f, b_i, b_C, b_o, x, h_prev, c_prev):
    """Scalar-loop LSTM step on ``[h_prev, x]``."""
    z = list(h_prev) + list(x)
    H = len(h_prev)

    def affine(W, b, j):
        return sum(W[j][k] * z[k] for k in range(len(z))) + b[j]

    h, c = [], []
    for j in range(H):
        f = _sig(affine(W_f, b_f, j))
        i = _sig(affine(W_i, b_i, j))
        g = math.tanh(affine(W_C, b_C, j))
        o = _sig(affine(W_o, b_o, j))
        cj = f * c_prev[j] + i * g
        c.append(cj)
        h.append(o * math.tanh(cj))
    return h, c


# -- Adam ------------------------------------------------------------------------

def adam_scalar(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam trajectory; ``grads[t]`` is the gradient used at step t+1."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta = theta - lr * mhat / (math.sqrt(vhat) + eps)
        out.append(theta)
    return out


# -- finite differences --------------------------------------------------------

def central_difference(f, arrays, step=1e-5):
    """Numerical gradient of scalar ``f()`` w.r.t. each array, perturbed in place."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = a[idx]
            a[idx] = old + step
            fp = f()
            a[idx] = old - step
            fm = f()
            a[idx] = old
            g[idx] = (fp - fm) / (2 * step)
        grads.append(g)
    return grads


def gradient_agreement(analytic, numeric, rtol=1e-5, atol=1e-9):
    """``(norm_rel_err, worst_elementwise_violation)`` for one tensor.

    The norm-wise relative error is ``|a - n| / (|a| + |n|)``.  Elementwise,
    an entry passes when it agrees to ``rtol`` relative to its own magnitude
    or to ``atol`` absolutely (the round-off floor of a 1e-5 central
    difference in float64).
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    rel = 0.0 if denom == 0 else float(np.linalg.norm(a - n) / denom)
    diff = np.abs(a - n)
    bound = np.maximum(rtol * np.maximum(np.abs(a), np.abs(n)), atol)
    worst = float(np.max(diff / bound)) if a.size else 0.0
    return rel, worst
