"""Synthetic labelled tractograms.

Each white-matter class is a bundle of noisy copies of one parametric curve
placed in its own region of a 160 x 200 x 140 mm box; grey-matter fibers
are short, nearly straight segments scattered over the whole box.  The
shapes borrow loosely from the eight named tracts but carry no anatomical
meaning; they only need to be separable by position and curvature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BadConfig
from .pruning import nudge_off_mask
from .trk_io import Fiber, Tractogram, TrkHeader

BOX = np.array([160.0, 200.0, 140.0])
CENTRE = BOX / 2
MIN_POINTS, MAX_POINTS = 36, 120

CLASS_NAMES = (
    "grey", "arcuate", "cingulum", "corticospinal", "forceps_major", "fornix",
    "inf_occipitofrontal", "sup_longitudinal", "uncinate",
)

DEFAULT_COUNTS = (2000,) + (150,) * 8


# -- base curves: t in [0, 1] -> (n, 3), centred near the origin ---------------

def _straight(t, length):
    return np.stack([np.zeros_like(t), (t - 0.5) * length, np.zeros_like(t)], axis=1)


def _arc(t, radius, sweep_deg):
    phi = np.deg2rad(sweep_deg) * (t - 0.5)
    return np.stack([radius * (np.cos(phi) - 1.0), radius * np.sin(phi), np.zeros_like(t)], axis=1)


def _ucurve(t, leg, radius):
    # leg down, half circle, leg back up, traversed by arc length
    total = 2 * leg + math.pi * radius
    s = t * total
    out = np.empty((t.size, 3))
    out[:, 2] = 0.0
    a = s < leg
    b = (s >= leg) & (s < leg + math.pi * radius)
    c = ~(a | b)
    out[a, 0], out[a, 1] = -radius, leg - s[a]
    ang = (s[b] - leg) / radius
    out[b, 0], out[b, 1] = -radius * np.cos(ang), -radius * np.sin(ang)
    out[c, 0], out[c, 1] = radius, s[c] - leg - math.pi * radius
    return out


def _scurve(t, length, amplitude):
    return np.stack([amplitude * np.sin(2 * math.pi * t), (t - 0.5) * length, np.zeros_like(t)], axis=1)


def _helix(t, radius, pitch, turns):
    phi = 2 * math.pi * turns * t
    return np.stack([radius * np.cos(phi), radius * np.sin(phi), pitch * turns * (t - 0.5)], axis=1)


CURVES = {"straight": _straight, "arc": _arc, "ucurve": _ucurve, "scurve": _scurve, "helix": _helix}


@dataclass(frozen=True)
class ClassTemplate:
    label: int
    curve: str
    params: dict  # name -> (low, high)
    points: tuple[int, int]
    region: tuple[float, float, float]  # offset from the box centre, mm
    orientation: tuple[float, float, float] = (0.0, 0.0, 0.0)  # Euler angles, degrees
    noise: float = 0.4  # per-point isotropic noise, mm
    spread: float = 3.0  # per-fiber displacement of the bundle, mm

    def __post_init__(self):
        lo, hi = self.points
        if not MIN_POINTS <= lo <= hi <= MAX_POINTS:
            raise BadConfig(f"class {self.label}: point range {self.points} not within [36, 120]")
        if self.noise < 0 or self.spread < 0:
            raise BadConfig(f"class {self.label}: negative noise")
        if self.curve not in CURVES:
            raise BadConfig(f"class {self.label}: unknown curve {self.curve!r}")


TEMPLATES = (
    None,  # grey matter is handled separately
    ClassTemplate(1, "arc", {"radius": (30, 38), "sweep_deg": (170, 210)}, (80, 120), (-42, 0, 12), (0, 90, 0)),
    ClassTemplate(2, "arc", {"radius": (70, 90), "sweep_deg": (60, 80)}, (70, 120), (-8, 5, 35), (0, 90, 0)),
    ClassTemplate(3, "straight", {"length": (80, 100)}, (60, 110), (22, -12, -10), (90, 0, 0)),
    ClassTemplate(4, "ucurve", {"leg": (15, 25), "radius": (22, 28)}, (60, 110), (0, -62, 10), (0, 0, 180)),
    ClassTemplate(5, "helix", {"radius": (8, 11), "pitch": (20, 26), "turns": (1.0, 1.3)}, (50, 90), (8, -18, -2)),
    ClassTemplate(6, "scurve", {"length": (110, 130), "amplitude": (3, 5)}, (80, 120), (40, 0, -22)),
    ClassTemplate(7, "scurve", {"length": (80, 100), "amplitude": (10, 14)}, (60, 110), (46, 5, 35)),
    ClassTemplate(8, "ucurve", {"leg": (10, 16), "radius": (8, 11)}, (40, 80), (32, 55, -28), (90, 0, 0)),
)

GREY_POINTS = (36, 60)
GREY_LENGTH = (8.0, 20.0)
GREY_HALF_EXTENT = np.array([60.0, 80.0, 50.0])


def rotation(angles_deg) -> np.ndarray:
    """Rotation matrix for intrinsic x-y-z Euler angles in degrees."""
    ax, ay, az = np.deg2rad(angles_deg)
    rx = np.array([[1, 0, 0], [0, math.cos(ax), -math.sin(ax)], [0, math.sin(ax), math.cos(ax)]])
    ry = np.array([[math.cos(ay), 0, math.sin(ay)], [0, 1, 0], [-math.sin(ay), 0, math.cos(ay)]])
    rz = np.array([[math.cos(az), -math.sin(az), 0], [math.sin(az), math.cos(az), 0], [0, 0, 1]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class SynthConfig:
    counts: tuple[int, ...] = DEFAULT_COUNTS
    seed: int = 0
    jitter: float = 1.0  # multiplies every noise and spread term
    # bounds used by generate_cohort when perturbing each brain
    max_rotation_deg: float = 4.0
    max_scale: float = 0.05
    max_shift_mm: float = 3.0
    # the brain-level similarity transform actually applied
    brain_rotation_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)
    brain_scale: float = 1.0
    brain_shift_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    brain_id: str = "B1"

    def validate(self):
        problems = []
        if len(self.counts) != 9:
            problems.append(f"counts needs 9 entries, got {len(self.counts)}")
        if any(c < 0 for c in self.counts):
            problems.append("counts must be non-negative")
        if not any(c > 0 for c in self.counts):
            problems.append("at least one class count must be positive")
        if self.jitter < 0:
            problems.append("jitter must be >= 0")
        if self.max_rotation_deg < 0 or self.max_scale < 0 or self.max_shift_mm < 0:
            problems.append("perturbation bounds must be >= 0")
        if not self.brain_scale > 0:
            problems.append("brain_scale must be positive")
        if problems:
            raise BadConfig(problems)


def _grey_fiber(rng) -> np.ndarray:
    n = int(rng.integers(GREY_POINTS[0], GREY_POINTS[1] + 1))
    length = rng.uniform(*GREY_LENGTH)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    bend = rng.normal(size=3)
    bend -= bend.dot(direction) * direction
    bend *= rng.uniform(0.0, 1.0) / max(np.linalg.norm(bend), 1e-12)
    t = np.linspace(-0.5, 0.5, n)
    pts = t[:, None] * length * direction + (t[:, None] ** 2) * 4.0 * bend
    centre = CENTRE + rng.uniform(-1, 1, size=3) * GREY_HALF_EXTENT
    return pts + centre


def _white_fiber(tpl: ClassTemplate, rng, jitter: float) -> np.ndarray:
    n = int(rng.integers(tpl.points[0], tpl.points[1] + 1))
    kwargs = {k: rng.uniform(lo, hi) for k, (lo, hi) in tpl.params.items()}
    t = np.linspace(0.0, 1.0, n)
    pts = CURVES[tpl.curve](t, **kwargs)
    wobble = rotation(rng.normal(scale=2.0 * jitter, size=3))
    pts = pts @ (rotation(tpl.orientation) @ wobble).T
    if rng.random() < 0.5:
        pts = pts[::-1]
    pts = pts + rng.normal(scale=tpl.spread * jitter, size=3)
    pts = pts + rng.normal(scale=tpl.noise * jitter, size=pts.shape)
    return pts + CENTRE + np.asarray(tpl.region)


def _brain_transform(cfg: SynthConfig):
    R = rotation(cfg.brain_rotation_deg) * cfg.brain_scale
    shift = np.asarray(cfg.brain_shift_mm, dtype=np.float64)
    return lambda p: (p - CENTRE) @ R.T + CENTRE + shift


def synthetic_header(n_fibers: int) -> TrkHeader:
    return TrkHeader(dim=tuple(int(v) for v in BOX), voxel_size=(1.0, 1.0, 1.0),
                     voxel_order=b"RAS", n_count=n_fibers, version=2)


def generate_brain(cfg: SynthConfig = SynthConfig()) -> tuple[Tractogram, list[int]]:
    """Sample one labelled tractogram.  Pure function of ``cfg``."""
    cfg.validate()
    order = [(label, k) for label, c in enumerate(cfg.counts) for k in range(c)]
    perm = np.random.default_rng([cfg.seed, 99]).permutation(len(order))
    move = _brain_transform(cfg)
    fibers, labels = [], []
    for j in perm:
        label, k = order[j]
        # one independent stream per fiber keeps generation order-free
        rng = np.random.default_rng([cfg.seed, label, k])
        pts = _grey_fiber(rng) if label == 0 else _white_fiber(TEMPLATES[label], rng, cfg.jitter)
        pts = move(pts).astype(np.float32).astype(np.float64)
        pts = nudge_off_mask(pts).astype(np.float32).astype(np.float64)
        fibers.append(Fiber(pts, label))
        labels.append(label)
    return Tractogram(synthetic_header(len(fibers)), fibers), labels


def generate_cohort(base: SynthConfig = SynthConfig(), n_brains: int = 3,
                    seed: int = 0) -> list[tuple[Tractogram, list[int]]]:
    """``n_brains`` brains, each with its own seed and a random similarity
    transform bounded by ``base.max_rotation_deg``, ``base.max_scale`` and
    ``base.max_shift_mm``."""
    if n_brains < 1:
        raise BadConfig("n_brains must be >= 1")
    return [generate_brain(cfg) for cfg in cohort_configs(base, n_brains, seed)]


def cohort_configs(base: SynthConfig, n_brains: int, seed: int) -> list[SynthConfig]:
    base.validate()
    out = []
    for b in range(n_brains):
        rng = np.random.default_rng([seed, 7, b])
        out.append(replace(
            base,
            seed=int(rng.integers(2**31)),
            brain_rotation_deg=tuple(float(v) for v in rng.uniform(-1, 1, 3) * base.max_rotation_deg),
            brain_scale=float(1.0 + rng.uniform(-1, 1) * base.max_scale),
            brain_shift_mm=tuple(float(v) for v in rng.uniform(-1, 1, 3) * base.max_shift_mm),
            brain_id=f"B{b + 1}",
        ))
    return out
