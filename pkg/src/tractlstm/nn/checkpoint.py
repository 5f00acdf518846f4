"""Model checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic  b"TLSTMCKP"
    uint32    format version
    uint32    length N of the JSON metadata block
    N bytes   UTF-8 JSON: layer chain, head kind, input scale, tensor table
    ...       raw little-endian float64 tensors, in tensor-table order

The metadata's ``tensors`` entry lists ``[name, shape]`` pairs; extra keys
supplied by the caller are stored under ``"meta"``.  Output bytes depend
only on the parameters and metadata, so identical models give identical files.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..errors import FormatError
from .layers import LstmCellParams
from .model import ModelParams

MAGIC = b"TLSTMCKP"
VERSION = 1
_PREFIX = struct.Struct("<8sII")


def dumps(params: ModelParams, meta: dict | None = None) -> bytes:
    cfg = params.config
    named = params.named_arrays()
    header = {
        "bilstm_hidden": cfg.bilstm_hidden,
        "lstm_hidden": list(cfg.lstm_hidden),
        "dense_hidden": cfg.dense_hidden,
        "input_size": cfg.input_size,
        "head_kind": params.head_kind,
        "output_size": int(params.head_W.shape[0]),
        "input_scale": params.input_scale,
        "input_shift": [float(v) for v in params.input_shift],
        "tensors": [[name, list(a.shape)] for name, a in named],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in named)
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + body


def loads(data: bytes) -> tuple[ModelParams, dict]:
    """Inverse of :func:`dumps`; returns the parameters and the caller metadata."""
    if len(data) < _PREFIX.size:
        raise FormatError("checkpoint too short")
    magic, version, n = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"not a checkpoint (magic {magic!r})")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    header = json.loads(data[_PREFIX.size:_PREFIX.size + n].decode())
    pos = _PREFIX.size + n
    tensors = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        if pos + 8 * count > len(data):
            raise FormatError(f"checkpoint truncated inside tensor {name}")
        tensors[name] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
        pos += 8 * count
    if pos != len(data):
        raise FormatError("trailing bytes after last tensor")

    def cell(prefix):
        return LstmCellParams(*[tensors[f"{prefix}.{k}"] for k in LstmCellParams.names])

    stack = [cell(f"lstm{k}") for k in range(len(header["lstm_hidden"]))]
    params = ModelParams(
        bi_fwd=cell("bi_fwd"), bi_bwd=cell("bi_bwd"), stack=stack,
        head_W=tensors["head.W"], head_b=tensors["head.b"], head_kind=header["head_kind"],
        dense_W=tensors.get("dense.W"), dense_b=tensors.get("dense.b"),
        input_scale=float(header["input_scale"]),
        input_shift=np.asarray(header["input_shift"], dtype=np.float64),
    )
    return params, header["meta"]


def save(path: str | os.PathLike, params: ModelParams, meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(params, meta))


def load(path: str | os.PathLike) -> tuple[ModelParams, dict]:
    with open(path, "rb") as fh:
        return loads(fh.read())
