"""Point-cloud data model and KITTI / PLY input-output.

A :class:`PointCloud` wraps an ``(N, 3)`` float64 coordinate array with an
optional reflectance channel and optional packed Semantic KITTI labels
(class id in the low 16 bits, instance id in the high 16 bits).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    EmptyInputError,
    InvalidDataError,
    LabelCountError,
    MalformedFileError,
)

KITTI_RECORD = 16
LABEL_RECORD = 4


class Point(NamedTuple):
    x: float
    y: float
    z: float
    reflectance: float | None = None


class SemanticLabel(NamedTuple):
    class_id: int
    instance_id: int = 0

    def pack(self) -> int:
        return (self.instance_id & 0xFFFF) << 16 | (self.class_id & 0xFFFF)

    @classmethod
    def unpack(cls, word: int) -> SemanticLabel:
        return cls(word & 0xFFFF, (word >> 16) & 0xFFFF)


class BoundingBox(NamedTuple):
    min: np.ndarray
    max: np.ndarray

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    def contains(self, xyz: np.ndarray) -> bool:
        xyz = np.atleast_2d(xyz)
        return bool(((xyz >= self.min) & (xyz <= self.max)).all())


@dataclass
class PointCloud:
    """Ordered points with optional reflectance and packed labels."""

    xyz: np.ndarray
    reflectance: np.ndarray | None = None
    labels: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        xyz = np.asarray(self.xyz, dtype=np.float64)
        if xyz.size == 0:
            xyz = xyz.reshape(0, 3)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise InvalidDataError(f"xyz must have shape (N, 3), got {xyz.shape}")
        self.xyz = xyz
        n = xyz.shape[0]
        if self.reflectance is not None:
            self.reflectance = np.asarray(self.reflectance, dtype=np.float64).reshape(-1)
            if self.reflectance.size != n:
                raise InvalidDataError("reflectance length differs from point count")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.uint32).reshape(-1)
            if self.labels.size != n:
                raise LabelCountError(
                    f"{self.labels.size} labels for {n} points"
                )

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def __getitem__(self, i: int) -> Point:
        x, y, z = (float(v) for v in self.xyz[i])
        r = None if self.reflectance is None else float(self.reflectance[i])
        return Point(x, y, z, r)

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    @property
    def class_ids(self) -> np.ndarray:
        if self.labels is None:
            raise AttributeError("cloud carries no labels")
        return (self.labels & 0xFFFF).astype(np.uint16)

    @property
    def instance_ids(self) -> np.ndarray:
        if self.labels is None:
            raise AttributeError("cloud carries no labels")
        return (self.labels >> 16).astype(np.uint16)

    def label(self, i: int) -> SemanticLabel:
        return SemanticLabel.unpack(int(self.labels[i]))

    def select(self, mask_or_index: np.ndarray) -> PointCloud:
        """Sub-cloud (all channels) for a boolean mask or index array."""
        return PointCloud(
            self.xyz[mask_or_index],
            None if self.reflectance is None else self.reflectance[mask_or_index],
            None if self.labels is None else self.labels[mask_or_index],
        )

    def with_labels(self, labels: np.ndarray) -> PointCloud:
        return PointCloud(self.xyz, self.reflectance, labels)


def load_kitti_bin(data: bytes) -> PointCloud:
    """Decode a KITTI ``.bin`` scan: little-endian ``float32`` x, y, z, reflectance."""
    if len(data) % KITTI_RECORD:
        raise MalformedFileError(
            f"scan length {len(data)} is not a multiple of {KITTI_RECORD} bytes"
        )
    rec = np.frombuffer(data, dtype="<f4").reshape(-1, 4)
    bad = ~np.isfinite(rec[:, :3]).all(axis=1)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise InvalidDataError(f"non-finite coordinate in record {idx}", index=idx)
    return PointCloud(rec[:, :3].astype(np.float64), rec[:, 3].astype(np.float64))


def dump_kitti_bin(cloud: PointCloud) -> bytes:
    rec = np.zeros((len(cloud), 4), dtype="<f4")
    rec[:, :3] = cloud.xyz
    if cloud.reflectance is not None:
        rec[:, 3] = cloud.reflectance
    return rec.tobytes()


def load_kitti_labels(data: bytes, cloud: PointCloud) -> PointCloud:
    """Attach a KITTI ``.label`` sidecar (one little-endian ``uint32`` per point)."""
    if len(data) != LABEL_RECORD * len(cloud):
        raise LabelCountError(
            f"label file holds {len(data)} bytes, expected {LABEL_RECORD * len(cloud)}"
        )
    return cloud.with_labels(np.frombuffer(data, dtype="<u4").astype(np.uint32))


def dump_kitti_labels(cloud: PointCloud) -> bytes:
    if cloud.labels is None:
        return b""
    return cloud.labels.astype("<u4").tobytes()


def read_scan(path: str | os.PathLike, labels: str | os.PathLike | None = None) -> PointCloud:
    """Load a ``.bin`` file and, if given (or found next to it), its ``.label`` file.

    The sidecar search follows the Semantic KITTI layout: ``x.label`` beside
    ``x.bin``, or ``../labels/x.label`` for a ``velodyne/x.bin`` scan.
    """
    path = Path(path)
    cloud = load_kitti_bin(path.read_bytes())
    if labels is None:
        for cand in (path.with_suffix(".label"),
                     path.parent.parent / "labels" / (path.stem + ".label")):
            if cand.exists():
                labels = cand
                break
    if labels is not None:
        cloud = load_kitti_labels(Path(labels).read_bytes(), cloud)
    return cloud


def write_scan(cloud: PointCloud, path: str | os.PathLike) -> None:
    path = Path(path)
    path.write_bytes(dump_kitti_bin(cloud))
    if cloud.labels is not None:
        path.with_suffix(".label").write_bytes(dump_kitti_labels(cloud))


def bounding_box(cloud: PointCloud) -> BoundingBox:
    if len(cloud) == 0:
        raise EmptyInputError("bounding box of an empty cloud")
    return BoundingBox(cloud.xyz.min(axis=0), cloud.xyz.max(axis=0))


def export_ply(cloud: PointCloud) -> bytes:
    """ASCII PLY 1.0 with x/y/z plus reflectance and class when present."""
    props = ["x", "y", "z"]
    cols = [cloud.xyz]
    fmts = ["%.9g", "%.9g", "%.9g"]
    if cloud.reflectance is not None:
        props.append("reflectance")
        cols.append(cloud.reflectance[:, None])
        fmts.append("%.9g")
    if cloud.labels is not None:
        props.append("class")
        cols.append(cloud.class_ids[:, None].astype(np.float64))
        fmts.append("%d")
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}"]
    for p in props:
        lines.append(f"property {'ushort' if p == 'class' else 'float'} {p}")
    lines.append("end_header")
    head = "\n".join(lines) + "\n"
    if len(cloud) == 0:
        return head.encode("ascii")
    table = np.hstack(cols)
    body = "\n".join(" ".join(f % v for f, v in zip(fmts, row)) for row in table)
    return (head + body + "\n").encode("ascii")


def parse_ply(data: bytes) -> PointCloud:
    """Read back the ASCII PLY subset written by :func:`export_ply`."""
    text = data.decode("ascii")
    head, sep, body = text.partition("end_header\n")
    if not sep or not head.startswith("ply"):
        raise MalformedFileError("not an ASCII PLY file")
    n = None
    props: list[str] = []
    for line in head.splitlines():
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        elif parts and parts[0] == "property":
            props.append(parts[-1])
        elif parts and parts[0] == "format" and parts[1] != "ascii":
            raise MalformedFileError("only ASCII PLY is supported")
    if n is None:
        raise MalformedFileError("PLY header lacks a vertex element")
    rows = [r.split() for r in body.splitlines() if r.strip()]
    if len(rows) != n:
        raise MalformedFileError(f"PLY declares {n} vertices, found {len(rows)}")
    table = np.array(rows, dtype=np.float64).reshape(n, len(props))
    col = {p: table[:, i] for i, p in enumerate(props)}
    xyz = np.column_stack([col["x"], col["y"], col["z"]]) if n else np.zeros((0, 3))
    refl = col.get("reflectance")
    labels = col["class"].astype(np.uint32) if "class" in col else None
    return PointCloud(xyz, refl, labels)
