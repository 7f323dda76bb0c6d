"""Octree occupancy codec, the voxel-grid baseline.

Coordinates are translated to the bounding-box minimum, multiplied by
``scale`` (cells per meter) and rounded to the nearest integer.  The
resulting voxel set lives in the cube ``[0, 2**d)^3`` with
``d = ceil(log2(max_coord + 1))`` and is sent as breadth-first occupancy
bytes, one per occupied node, through a single adaptive 255-symbol context
(an occupied node never has an empty child mask).  Points falling into the
same voxel are merged.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numba
import numpy as np

from . import entropy as ec
from .errors import (
    CorruptionError,
    DecodeUnderrunError,
    EmptyInputError,
    FormatError,
    InvalidParameterError,
)
from .frame import CODEC_OCTREE, EncodedFrame, f32_box
from .pointcloud import PointCloud

MAX_DEPTH = 21

_jit = numba.njit(cache=True, nogil=True)


@dataclass(frozen=True)
class VoxelizationParams:
    scale: float
    translation: np.ndarray
    depth: int


@dataclass
class Voxelized:
    voxels: np.ndarray
    params: VoxelizationParams
    duplicates: int

    def __len__(self) -> int:
        return self.voxels.shape[0]


def cube_depth(max_coord: int) -> int:
    """Smallest ``d`` with every coordinate in ``[0, 2**d)``."""
    if max_coord < 0:
        raise InvalidParameterError("voxel coordinates must be non-negative")
    return int(max_coord).bit_length()


@_jit
def _morton(vox, depth):
    n = vox.shape[0]
    codes = np.zeros(n, dtype=np.int64)
    for i in range(n):
        x, y, z = vox[i, 0], vox[i, 1], vox[i, 2]
        c = 0
        for b in range(depth - 1, -1, -1):
            c = (c << 3) | (((x >> b) & 1) << 2) | (((y >> b) & 1) << 1) | ((z >> b) & 1)
        codes[i] = c
    return codes


@_jit
def _unmorton(codes, depth):
    n = codes.size
    vox = np.zeros((n, 3), dtype=np.int64)
    for i in range(n):
        c = codes[i]
        for b in range(depth):
            o = (c >> (3 * b)) & 7
            vox[i, 0] |= ((o >> 2) & 1) << b
            vox[i, 1] |= ((o >> 1) & 1) << b
            vox[i, 2] |= (o & 1) << b
    return vox


def _check_scale(scale: float) -> float:
    if not (isinstance(scale, (int, float, np.floating)) and math.isfinite(scale) and scale > 0):
        raise InvalidParameterError(f"scale must be a positive finite number, got {scale!r}")
    s32 = float(np.float32(scale))
    if s32 <= 0:
        raise InvalidParameterError(f"scale {scale!r} underflows float32")
    return s32


def voxelize(cloud: PointCloud, scale: float) -> Voxelized:
    """Integer voxel set (Morton order) plus parameters and merged-duplicate count."""
    s = _check_scale(scale)
    if len(cloud) == 0:
        raise EmptyInputError("cannot voxelize an empty cloud")
    lo, _ = f32_box(cloud.xyz.min(axis=0), cloud.xyz.max(axis=0))
    ints = np.floor((cloud.xyz - lo) * s + 0.5).astype(np.int64)
    depth = cube_depth(int(ints.max()))
    if depth > MAX_DEPTH:
        raise InvalidParameterError(
            f"scale {scale} needs octree depth {depth}, more than {MAX_DEPTH}"
        )
    codes = np.unique(_morton(ints, depth))
    vox = _unmorton(codes, depth)
    return Voxelized(vox, VoxelizationParams(s, lo, depth), len(cloud) - codes.size)


def occupancy_levels(codes: np.ndarray, depth: int) -> list[np.ndarray]:
    """Breadth-first occupancy bytes per level for sorted unique Morton codes."""
    levels = []
    for lvl in range(depth):
        child = np.unique(codes >> (3 * (depth - lvl - 1)))
        parent = child >> 3
        starts = np.flatnonzero(np.r_[True, parent[1:] != parent[:-1]])
        bits = np.left_shift(1, child & 7).astype(np.int64)
        levels.append(np.bitwise_or.reduceat(bits, starts))
    return levels


def _model() -> ec.AdaptiveModel:
    return ec.AdaptiveModel([255])


def encode_voxels(vx: Voxelized, bbox_max: np.ndarray, profile: int = 0) -> EncodedFrame:
    p = vx.params
    codes = _morton(vx.voxels, p.depth)
    levels = occupancy_levels(codes, p.depth)
    n_sym = sum(lv.size for lv in levels)
    enc = ec.StreamEncoder(_model(), ec.output_capacity(n_sym))
    for lv in levels:
        enc.write(np.zeros(lv.size, dtype=np.int64), lv - 1)
    payload = enc.finish() if p.depth else b""
    return EncodedFrame(
        codec=CODEC_OCTREE,
        param=p.depth,
        point_count=len(vx),
        bbox_min=tuple(float(v) for v in p.translation),
        bbox_max=tuple(float(v) for v in bbox_max),
        payload=payload,
        profile=profile,
        ext=struct.pack("<f", p.scale),
    )


def encode_octree(cloud: PointCloud, scale: float, profile: int = 0) -> EncodedFrame:
    vx = voxelize(cloud, scale)
    _, hi = f32_box(cloud.xyz.min(axis=0), cloud.xyz.max(axis=0))
    return encode_voxels(vx, hi, profile)


def decode_voxels(frame: EncodedFrame) -> Voxelized:
    if frame.codec != CODEC_OCTREE:
        raise FormatError(f"frame holds codec {frame.codec_name}, not octree")
    if len(frame.ext) != 4 or frame.param > MAX_DEPTH:
        raise FormatError("malformed octree frame header")
    (scale,) = struct.unpack("<f", frame.ext)
    if not scale > 0:
        raise FormatError(f"invalid scale {scale} in header")
    depth = frame.param
    params = VoxelizationParams(float(scale), np.array(frame.bbox_min, dtype=np.float64), depth)
    if depth == 0:
        if frame.point_count != 1 or frame.payload:
            raise CorruptionError("depth-0 octree must hold exactly one voxel and no payload")
        return Voxelized(np.zeros((1, 3), dtype=np.int64), params, 0)
    dec = ec.StreamDecoder(frame.payload, _model())
    nodes = np.zeros(1, dtype=np.int64)
    shifts = np.arange(8, dtype=np.int64)
    for _ in range(depth):
        try:
            occ = dec.read(np.zeros(nodes.size, dtype=np.int64)) + 1
        except DecodeUnderrunError as exc:
            raise CorruptionError(str(exc)) from exc
        mask = ((occ[:, None] >> shifts) & 1).astype(bool)
        nodes = ((nodes[:, None] << 3) | shifts)[mask]
        if nodes.size > frame.point_count:
            raise CorruptionError("occupancy stream describes more voxels than the header")
    if nodes.size != frame.point_count:
        raise CorruptionError(
            f"occupancy stream describes {nodes.size} voxels, header says {frame.point_count}"
        )
    if dec.consumed != len(frame.payload):
        raise CorruptionError("trailing bytes in occupancy payload")
    return Voxelized(_unmorton(nodes, depth), params, 0)


def voxel_centers(vx: Voxelized) -> np.ndarray:
    return vx.params.translation + vx.voxels / vx.params.scale


def decode_octree(frame: EncodedFrame) -> PointCloud:
    """Voxel positions mapped back to meters (one point per occupied voxel)."""
    return PointCloud(voxel_centers(decode_voxels(frame)))
