"""Deterministic labeled street scenes standing in for Semantic KITTI frames.

Layout (meters, sensor at the origin): a ground plane spans the widest
footprint; building facades line the perimeter; vegetation sits in a ring
inside them; poles and signs along the kerb; vehicles and people in the
interior.  The nesting keeps every HSC level's bounding box inside the
previous one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SpecError
from .pointcloud import PointCloud, SemanticLabel
from .semantic import ClassConfig

SHAPES = ("plane", "boxes", "facade", "canopy", "poles", "scatter")

# footprint radius of the ground plane
GROUND_R = 45.0
DEFAULT_SHAPE = {
    "road": "plane",
    "vehicle": "boxes",
    "person": "boxes",
    "building": "facade",
    "vegetation": "canopy",
    "traffic-sign": "poles",
    "other": "scatter",
}
# (length, width, height) of one object box
BOX_DIMS = {"vehicle": (4.2, 1.8, 1.5), "person": (0.6, 0.6, 1.8)}
POINTS_PER_OBJECT = {"vehicle": 500, "person": 120}


@dataclass(frozen=True)
class ClassCount:
    class_id: int
    count: int
    shape: str


@dataclass(frozen=True)
class SyntheticSceneSpec:
    classes: tuple[ClassCount, ...]
    seed: int = 0
    reflectance: bool = True

    def __post_init__(self) -> None:
        for c in self.classes:
            if c.count < 0:
                raise SpecError(f"negative point count for class {c.class_id}")
            if c.shape not in SHAPES:
                raise SpecError(f"unknown shape {c.shape!r}, expected one of {SHAPES}")
            if not 0 <= c.class_id <= 0xFFFF:
                raise SpecError(f"class id {c.class_id} does not fit 16 bits")
        if self.total == 0:
            raise SpecError("scene spec has zero points")
        if not 0 <= self.seed < 2**64:
            raise SpecError("seed must be an unsigned 64-bit integer")

    @property
    def total(self) -> int:
        return sum(c.count for c in self.classes)

    def counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for c in self.classes:
            out[c.class_id] = out.get(c.class_id, 0) + c.count
        return out

    @classmethod
    def parse(cls, text: str, seed: int = 0, config: ClassConfig | None = None) -> SyntheticSceneSpec:
        """``name:count[:shape],...`` with names or ids from the class config."""
        cfg = config or ClassConfig.default()
        classes = []
        for item in filter(None, (t.strip() for t in text.split(","))):
            parts = item.split(":")
            if len(parts) not in (2, 3) or not parts[1].isdigit():
                raise SpecError(f"cannot parse scene entry {item!r}")
            try:
                ids = cfg.resolve(parts[0])
            except Exception as exc:
                raise SpecError(str(exc)) from None
            if len(ids) != 1:
                raise SpecError(f"{parts[0]!r} names a group, give a single class")
            cid = ids.pop()
            shape = parts[2] if len(parts) == 3 else DEFAULT_SHAPE.get(cfg.by_id[cid].group, "scatter")
            classes.append(ClassCount(cid, int(parts[1]), shape))
        return cls(tuple(classes), seed)


def default_spec(seed: int = 0, scale: float = 1.0) -> SyntheticSceneSpec:
    """All class groups, roughly the proportions of a KITTI street frame."""
    base = [(40, 50000, "plane"), (48, 8000, "plane"), (10, 5000, "boxes"),
            (30, 500, "boxes"), (50, 40000, "facade"), (70, 20000, "canopy"),
            (80, 600, "poles"), (81, 400, "poles"), (99, 300, "scatter")]
    return SyntheticSceneSpec(
        tuple(ClassCount(c, max(1, int(round(n * scale))), s) for c, n, s in base), seed)


def _plane(rng, n, group):
    xy = rng.uniform(-GROUND_R, GROUND_R, size=(n, 2))
    z = rng.normal(-1.7, 0.02, size=n)
    return np.c_[xy, z]


def _box_surface(rng, n, center, dims, yaw):
    l, w, h = dims
    areas = np.array([w * h, w * h, l * h, l * h, l * w])
    face = rng.choice(5, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=(n, 3)) * [l, w, h]
    u[face == 0, 0] = -l / 2
    u[face == 1, 0] = l / 2
    u[face == 2, 1] = -w / 2
    u[face == 3, 1] = w / 2
    u[face == 4, 2] = h / 2
    c, s = math.cos(yaw), math.sin(yaw)
    x = c * u[:, 0] - s * u[:, 1]
    y = s * u[:, 0] + c * u[:, 1]
    return np.c_[x, y, u[:, 2]] + center


def _boxes(rng, n, group):
    dims = BOX_DIMS.get(group, BOX_DIMS["vehicle"])
    k = max(1, n // POINTS_PER_OBJECT.get(group, 300))
    centers = np.c_[rng.uniform(-18, 18, size=(k, 2)), np.full(k, -1.7 + dims[2] / 2)]
    yaws = rng.uniform(0, math.pi, size=k)
    sizes = np.bincount(rng.integers(0, k, size=n), minlength=k)
    parts = [_box_surface(rng, m, centers[i], dims, yaws[i]) for i, m in enumerate(sizes)]
    return np.concatenate(parts)


def _facade(rng, n, group):
    # four walls of a block boundary at distance 34..38 from the sensor
    wall = rng.integers(0, 4, size=n)
    along = rng.uniform(-38, 38, size=n)
    depth = rng.uniform(34, 38, size=n)
    z = rng.uniform(-1.7, 10.0, size=n)
    x = np.where(wall < 2, np.where(wall == 0, depth, -depth), along)
    y = np.where(wall < 2, along, np.where(wall == 2, depth, -depth))
    return np.c_[x, y, z]


def _canopy(rng, n, group):
    k = max(1, n // 800)
    ang = rng.uniform(0, 2 * math.pi, size=k)
    rad = rng.uniform(22, 30, size=k)
    centers = np.c_[rad * np.cos(ang), rad * np.sin(ang), rng.uniform(2, 5, size=k)]
    which = rng.integers(0, k, size=n)
    pts = centers[which] + rng.normal(0, 1.5, size=(n, 3))
    pts[:, 2] = np.maximum(pts[:, 2], -1.6)
    return pts


def _poles(rng, n, group):
    k = max(1, n // 100)
    ang = rng.uniform(0, 2 * math.pi, size=k)
    rad = rng.uniform(12, 18, size=k)
    which = rng.integers(0, k, size=n)
    xy = np.c_[rad * np.cos(ang), rad * np.sin(ang)][which] + rng.normal(0, 0.05, size=(n, 2))
    z = rng.uniform(-1.7, 3.5, size=n)
    return np.c_[xy, z]


def _scatter(rng, n, group):
    return np.c_[rng.uniform(-15, 15, size=(n, 2)), rng.uniform(-1.7, 1.0, size=n)]


_GENERATORS = {"plane": _plane, "boxes": _boxes, "facade": _facade,
               "canopy": _canopy, "poles": _poles, "scatter": _scatter}


def generate(spec: SyntheticSceneSpec, config: ClassConfig | None = None) -> PointCloud:
    """Build the scene; coordinates are exactly representable as float32."""
    cfg = config or ClassConfig.default()
    rng = np.random.default_rng(spec.seed)
    xyz, labels = [], []
    for cc in spec.classes:
        if cc.count == 0:
            continue
        group = cfg.by_id[cc.class_id].group if cc.class_id in cfg.by_id else "other"
        xyz.append(_GENERATORS[cc.shape](rng, cc.count, group))
        labels.append(np.full(cc.count, SemanticLabel(cc.class_id, 0).pack(), dtype=np.uint32))
    pts = np.concatenate(xyz).astype(np.float32).astype(np.float64)
    rng_r = rng.uniform(0, 1, size=pts.shape[0]) if spec.reflectance else np.zeros(pts.shape[0])
    refl = rng_r.astype(np.float32).astype(np.float64)
    return PointCloud(pts, refl, np.concatenate(labels))


def corpus(n_frames: int, seed: int = 0, scale: float = 1.0) -> list[PointCloud]:
    """``n_frames`` independent default scenes with seeds ``seed, seed+1, ...``."""
    return [generate(default_spec(seed + i, scale)) for i in range(n_frames)]
