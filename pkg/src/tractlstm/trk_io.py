"""Reading and writing TrackVis ``.trk`` files and ``.lbl`` label sidecars.

Only the little-endian flavour of the format is supported.  The header is
the usual 1000-byte TrackVis block; the fields we care about are decoded,
everything else is carried around untouched in :attr:`TrkHeader.raw`.

Body layout, repeated once per fiber::

    int32    n_points
    float32  n_points * (3 + n_scalars)   x, y, z, scalars...
    float32  n_properties

Per-point scalars and per-fiber properties are read and thrown away; the
writer always emits ``n_scalars = n_properties = 0``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import BadHeader, BadLabel, CountMismatch, NonFinitePoint, TruncatedFile

HEADER_SIZE = 1000
MAGIC = b"TRACK\x00"
N_LABELS = 9

# Full TrackVis v2 header.  Names starting with "_" are opaque to us.
header_dtype = np.dtype([
    ("magic", "S6"),
    ("dim", "<i2", 3),
    ("voxel_size", "<f4", 3),
    ("origin", "<f4", 3),
    ("n_scalars", "<i2"),
    ("_scalar_name", "V200"),
    ("n_properties", "<i2"),
    ("_property_name", "V200"),
    ("vox_to_ras", "<f4", (4, 4)),
    ("_reserved", "V444"),
    ("voxel_order", "S4"),
    ("_pad2", "V4"),
    ("_image_orientation_patient", "V24"),
    ("_pad1", "V2"),
    ("_flips", "V6"),
    ("n_count", "<i4"),
    ("version", "<i4"),
    ("hdr_size", "<i4"),
])
assert header_dtype.itemsize == HEADER_SIZE

_COUNT = struct.Struct("<i")


@dataclass(eq=False)
class TrkHeader:
    """Decoded subset of the 1000-byte header.

    ``raw`` holds the original header bytes; on write the decoded fields are
    laid over it so unknown fields survive a round trip.
    """

    magic: bytes = MAGIC
    dim: tuple[int, int, int] = (1, 1, 1)
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    n_scalars: int = 0
    n_properties: int = 0
    vox_to_ras: np.ndarray = field(default_factory=lambda: np.eye(4, dtype=np.float32))
    voxel_order: bytes = b"RAS"
    n_count: int = 0
    version: int = 2
    hdr_size: int = HEADER_SIZE
    raw: bytes = bytes(HEADER_SIZE)

    def __post_init__(self):
        self.dim = tuple(int(d) for d in self.dim)
        self.voxel_size = tuple(float(np.float32(v)) for v in self.voxel_size)
        self.origin = tuple(float(np.float32(v)) for v in self.origin)
        self.vox_to_ras = np.asarray(self.vox_to_ras, dtype=np.float32).reshape(4, 4)
        self.voxel_order = bytes(self.voxel_order).rstrip(b"\x00")
        if len(self.raw) != HEADER_SIZE:
            raise BadHeader(f"raw header must be {HEADER_SIZE} bytes, got {len(self.raw)}")
        if self.hdr_size != HEADER_SIZE:
            raise BadHeader(f"hdr_size must be {HEADER_SIZE}, got {self.hdr_size}")
        if self.n_scalars < 0 or self.n_properties < 0:
            raise BadHeader("n_scalars and n_properties must be non-negative")

    def to_bytes(self) -> bytes:
        rec = np.frombuffer(bytearray(self.raw), dtype=header_dtype).copy()
        rec["magic"] = self.magic
        rec["dim"] = self.dim
        rec["voxel_size"] = self.voxel_size
        rec["origin"] = self.origin
        rec["n_scalars"] = self.n_scalars
        rec["n_properties"] = self.n_properties
        rec["vox_to_ras"] = self.vox_to_ras
        rec["voxel_order"] = self.voxel_order
        rec["n_count"] = self.n_count
        rec["version"] = self.version
        rec["hdr_size"] = self.hdr_size
        out = rec.tobytes()
        assert len(out) == HEADER_SIZE
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "TrkHeader":
        if len(data) < HEADER_SIZE:
            raise TruncatedFile(f"header needs {HEADER_SIZE} bytes, got {len(data)}")
        raw = bytes(data[:HEADER_SIZE])
        rec = np.frombuffer(raw, dtype=header_dtype)[0]
        if int(rec["hdr_size"]) != HEADER_SIZE:
            raise BadHeader(f"hdr_size is {int(rec['hdr_size'])}, expected {HEADER_SIZE}")
        if bytes(rec["magic"]).ljust(6, b"\x00") != MAGIC:
            raise BadHeader(f"bad magic {bytes(rec['magic'])!r}")
        return cls(
            magic=MAGIC,
            dim=tuple(rec["dim"]),
            voxel_size=tuple(rec["voxel_size"]),
            origin=tuple(rec["origin"]),
            n_scalars=int(rec["n_scalars"]),
            n_properties=int(rec["n_properties"]),
            vox_to_ras=np.array(rec["vox_to_ras"]),
            voxel_order=bytes(rec["voxel_order"]),
            n_count=int(rec["n_count"]),
            version=int(rec["version"]),
            hdr_size=int(rec["hdr_size"]),
            raw=raw,
        )

    def __eq__(self, other):
        if not isinstance(other, TrkHeader):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()


class Fiber:
    """One streamline: an ``(n, 3)`` float64 point array and an optional label."""

    __slots__ = ("points", "label")

    def __init__(self, points, label: int | None = None):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise ValueError(f"fiber points must be a non-empty (n, 3) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise NonFinitePoint("fiber contains non-finite coordinates")
        if label is not None:
            label = int(label)
            if not 0 <= label < N_LABELS:
                raise BadLabel(f"label {label} outside 0..{N_LABELS - 1}")
        pts.setflags(write=False)
        self.points = pts
        self.label = label

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Fiber):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.points, other.points)

    def __repr__(self):
        return f"Fiber(n_points={len(self)}, label={self.label})"


@dataclass(eq=True)
class Tractogram:
    header: TrkHeader
    fibers: list[Fiber]

    def __post_init__(self):
        self.fibers = list(self.fibers)
        n = self.header.n_count
        if n > 0 and n != len(self.fibers):
            raise BadHeader(f"header n_count={n} but tractogram holds {len(self.fibers)} fibers")

    def __len__(self):
        return len(self.fibers)

    @property
    def labels(self) -> list[int | None]:
        return [f.label for f in self.fibers]


def read_trk(data: bytes) -> Tractogram:
    """Parse a complete ``.trk`` byte string."""
    data = memoryview(data).cast("B")
    header = TrkHeader.from_bytes(data)
    ns, nprop = header.n_scalars, header.n_properties
    stride = 3 + ns
    fibers = []
    pos, end = HEADER_SIZE, len(data)
    while pos < end:
        if end - pos < _COUNT.size:
            raise TruncatedFile(f"stream ends inside the point count of fiber {len(fibers)}")
        (n_pts,) = _COUNT.unpack_from(data, pos)
        pos += _COUNT.size
        if n_pts <= 0:
            raise BadHeader(f"fiber {len(fibers)} declares {n_pts} points")
        n_floats = n_pts * stride + nprop
        nbytes = 4 * n_floats
        if end - pos < nbytes:
            raise TruncatedFile(f"stream ends inside fiber {len(fibers)}")
        values = np.frombuffer(data, dtype="<f4", count=n_floats, offset=pos)
        pos += nbytes
        pts = values[: n_pts * stride].reshape(n_pts, stride)[:, :3]
        if not np.all(np.isfinite(pts)):
            raise NonFinitePoint(f"fiber {len(fibers)} has a non-finite coordinate")
        fibers.append(Fiber(pts.astype(np.float64)))
    if header.n_count > 0 and header.n_count != len(fibers):
        raise BadHeader(f"header n_count={header.n_count} but body holds {len(fibers)} fibers")
    return Tractogram(header, fibers)


def write_trk(t: Tractogram) -> bytes:
    """Serialize ``t``.  Coordinates are narrowed to float32."""
    hdr = TrkHeader(
        magic=t.header.magic, dim=t.header.dim, voxel_size=t.header.voxel_size,
        origin=t.header.origin, n_scalars=0, n_properties=0,
        vox_to_ras=t.header.vox_to_ras, voxel_order=t.header.voxel_order,
        n_count=t.header.n_count, version=t.header.version, raw=t.header.raw,
    )
    chunks = [hdr.to_bytes()]
    for f in t.fibers:
        chunks.append(_COUNT.pack(len(f)))
        chunks.append(np.ascontiguousarray(f.points, dtype="<f4").tobytes())
    return b"".join(chunks)


def load_trk(path: str | os.PathLike) -> Tractogram:
    with open(path, "rb") as fh:
        return read_trk(fh.read())


def save_trk(path: str | os.PathLike, t: Tractogram) -> None:
    with open(path, "wb") as fh:
        fh.write(write_trk(t))


# -- label sidecar ----------------------------------------------------------

def read_labels(text: str | Iterable[str]) -> list[int]:
    """Parse one integer label per line.  Only a trailing newline may be blank."""
    if isinstance(text, str):
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
    else:
        lines = [ln.rstrip("\n") for ln in text]
    labels = []
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        try:
            value = int(s)
        except ValueError:
            raise BadLabel(f"line {lineno}: {line!r} is not an integer") from None
        if not 0 <= value < N_LABELS:
            raise BadLabel(f"line {lineno}: label {value} outside 0..{N_LABELS - 1}")
        labels.append(value)
    return labels


def write_labels(labels: Iterable[int]) -> str:
    out = []
    for value in labels:
        value = int(value)
        if not 0 <= value < N_LABELS:
            raise BadLabel(f"label {value} outside 0..{N_LABELS - 1}")
        out.append(f"{value}\n")
    return "".join(out)


def attach_labels(t: Tractogram, labels: list[int]) -> Tractogram:
    """Return a copy of ``t`` whose fibers carry ``labels`` (aligned by index)."""
    if len(labels) != len(t.fibers):
        raise CountMismatch(f"{len(labels)} labels for {len(t.fibers)} fibers")
    fibers = [Fiber(f.points, lab) for f, lab in zip(t.fibers, labels)]
    return Tractogram(t.header, fibers)


def load_labels(path: str | os.PathLike) -> list[int]:
    with open(path, encoding="ascii") as fh:
        return read_labels(fh.read())


def save_labels(path: str | os.PathLike, labels: Iterable[int]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(write_labels(labels))


def sidecar_path(trk_path: str | os.PathLike) -> str:
    """``brain.trk`` -> ``brain.lbl``."""
    root, _ = os.path.splitext(os.fspath(trk_path))
    return root + ".lbl"
