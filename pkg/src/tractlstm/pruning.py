"""Curvature-based point selection and fixed-length masking of fibers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFiber
from .trk_io import Fiber

PLANES = {"XY": (0, 1), "YZ": (1, 2), "ZX": (2, 0)}
OFFSETS = (1, 4)
DEFAULT_KEEP_FRACTION = 0.75
DEFAULT_MAX_LEN = 100
MASK_VALUE = 0.0
# shift applied to a fiber that touches the mask sentinel exactly
MASK_NUDGE = 1e-3


def project(points, plane: str) -> np.ndarray:
    """Drop the axis missing from ``plane``.  ZX keeps (z, x) in that order."""
    axes = PLANES[plane]
    return np.asarray(points, dtype=np.float64)[:, axes]


def _turning_angles(before: np.ndarray, after: np.ndarray) -> np.ndarray:
    # unsigned angle between 2D vectors, 0 where either vector vanishes
    cross = before[:, 0] * after[:, 1] - before[:, 1] * after[:, 0]
    dot = np.einsum("ij,ij->i", before, after)
    ang = np.arctan2(np.abs(cross), dot)
    degenerate = ~(np.any(before != 0, axis=1) & np.any(after != 0, axis=1))
    ang[degenerate] = 0.0
    return ang


def curvature_scores(f: Fiber | np.ndarray) -> np.ndarray:
    """Multi-scale turning-angle score for every point of a fiber.

    For each point the unsigned turning angle between the incoming and the
    outgoing direction is measured in the XY, YZ and ZX projections, once
    using the immediate neighbours and once using the points four steps
    away.  The score is the sum of those six angles (radians).  Terms whose
    neighbour falls off either end of the fiber contribute nothing.
    """
    pts = f.points if isinstance(f, Fiber) else np.asarray(f, dtype=np.float64)
    n = pts.shape[0]
    if n < 2:
        raise DegenerateFiber(f"need at least 2 points, got {n}")
    scores = np.zeros(n)
    for k in OFFSETS:
        if n <= 2 * k:
            continue
        centre = pts[k:n - k]
        before = centre - pts[: n - 2 * k]
        after = pts[2 * k:] - centre
        for axes in PLANES.values():
            scores[k:n - k] += _turning_angles(before[:, axes], after[:, axes])
    return scores


def n_kept(n: int, keep_fraction: float) -> int:
    # round first so 0.7 * 10 does not ceil to 8
    return max(1, math.ceil(round(keep_fraction * n, 9)))


def prune_fiber(f: Fiber, keep_fraction: float = DEFAULT_KEEP_FRACTION) -> Fiber:
    """Keep the ``ceil(keep_fraction * n)`` highest-curvature points in order.

    Ties in score are resolved in favour of the earlier point.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    n = len(f)
    if n < 2:
        raise DegenerateFiber(f"need at least 2 points, got {n}")
    k = n_kept(n, keep_fraction)
    if k >= n:
        return Fiber(f.points, f.label)
    scores = curvature_scores(f)
    order = np.lexsort((np.arange(n), -scores))
    keep = np.sort(order[:k])
    return Fiber(f.points[keep], f.label)


@dataclass(eq=False)
class MaskedSequence:
    """Fixed-length coordinates plus a validity flag per time step.

    Valid steps form a prefix; invalid steps hold ``mask_value`` in all
    three coordinates.
    """

    coords: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise ValueError(f"coords must be (T, 3), got {self.coords.shape}")
        if self.valid.shape != self.coords.shape[:1]:
            raise ValueError("valid flags must match the number of time steps")
        n = int(self.valid.sum())
        if n == 0:
            raise ValueError("a masked sequence needs at least one valid step")
        if not self.valid[:n].all():
            raise ValueError("valid steps must form a prefix")

    @property
    def length(self) -> int:
        return int(self.valid.sum())

    def __eq__(self, other):
        if not isinstance(other, MaskedSequence):
            return NotImplemented
        return np.array_equal(self.coords, other.coords) and np.array_equal(self.valid, other.valid)


def nudge_off_mask(points: np.ndarray, mask_value: float = MASK_VALUE) -> np.ndarray:
    """Shift ``points`` until no point equals the mask sentinel in all coordinates."""
    pts = np.asarray(points, dtype=np.float64)
    while np.any(np.all(pts == mask_value, axis=1)):
        pts = pts + MASK_NUDGE
    return pts


def to_fixed_length(f: Fiber | np.ndarray, max_len: int = DEFAULT_MAX_LEN,
                    mask_value: float = MASK_VALUE) -> MaskedSequence:
    """Truncate to the first ``max_len`` points or pad the tail with ``mask_value``."""
    pts = f.points if isinstance(f, Fiber) else np.asarray(f, dtype=np.float64)
    if pts.shape[0] == 0:
        raise DegenerateFiber("empty fiber")
    pts = nudge_off_mask(pts[:max_len], mask_value)
    n = pts.shape[0]
    coords = np.full((max_len, 3), mask_value, dtype=np.float64)
    coords[:n] = pts
    valid = np.zeros(max_len, dtype=bool)
    valid[:n] = True
    return MaskedSequence(coords, valid)


def sequence_mask(coords: np.ndarray, mask_value: float = MASK_VALUE) -> np.ndarray:
    """Validity flags recovered from coordinates: a step is masked when all
    of its features equal ``mask_value``."""
    return ~np.all(np.asarray(coords) == mask_value, axis=-1)


def preprocess(f: Fiber, keep_fraction: float = DEFAULT_KEEP_FRACTION,
               max_len: int = DEFAULT_MAX_LEN, mask_value: float = MASK_VALUE) -> MaskedSequence:
    """Prune, then pad/truncate."""
    if len(f) >= 2:
        f = prune_fiber(f, keep_fraction)
    return to_fixed_length(f, max_len, mask_value)
