"""Self-describing binary container for compressed geometry (``.hscf``).

Layout, all integers little-endian::

    magic        4s   b"HSCF"
    version      u8
    codec        u8   0 = kdtree, 1 = octree
    param        u8   quantization level q (kdtree) or octree depth d
    profile      u8   0/1/2 = HSC-0/1/2, 255 = custom
    point_count  u32
    bbox         6 x f32   min xyz, max xyz
    ext_len      u8
    ext          ext_len bytes, codec specific
    payload_len  u32
    payload_crc  u32  zlib.crc32 of the payload
    payload      payload_len bytes

The kdtree extension is one ``u8`` compression level; the octree extension
is the voxelization scale as ``f32``.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import CorruptionError, FormatError

MAGIC = b"HSCF"
VERSION = 1
CODEC_KDTREE = 0
CODEC_OCTREE = 1
CODEC_NAMES = {CODEC_KDTREE: "kdtree", CODEC_OCTREE: "octree"}
PROFILE_IDS = {"hsc0": 0, "hsc1": 1, "hsc2": 2}
PROFILE_CUSTOM = 255

_HEAD = struct.Struct("<4sBBBBI6fB")
_TAIL = struct.Struct("<II")


@dataclass
class EncodedFrame:
    codec: int
    param: int
    point_count: int
    bbox_min: tuple[float, float, float]
    bbox_max: tuple[float, float, float]
    payload: bytes
    profile: int = 0
    ext: bytes = b""
    version: int = VERSION

    def to_bytes(self) -> bytes:
        head = _HEAD.pack(MAGIC, self.version, self.codec, self.param, self.profile,
                          self.point_count, *self.bbox_min, *self.bbox_max, len(self.ext))
        tail = _TAIL.pack(len(self.payload), zlib.crc32(self.payload))
        return head + self.ext + tail + self.payload

    def __len__(self) -> int:
        return _HEAD.size + len(self.ext) + _TAIL.size + len(self.payload)

    @property
    def codec_name(self) -> str:
        return CODEC_NAMES.get(self.codec, f"codec{self.codec}")

    @classmethod
    def from_bytes(cls, data: bytes) -> EncodedFrame:
        if len(data) < _HEAD.size:
            raise FormatError("frame shorter than its header")
        magic, version, codec, param, profile, count, *box, ext_len = _HEAD.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported frame version {version}")
        if codec not in CODEC_NAMES:
            raise FormatError(f"unknown codec id {codec}")
        off = _HEAD.size
        if len(data) < off + ext_len + _TAIL.size:
            raise FormatError("truncated frame header")
        ext = bytes(data[off:off + ext_len])
        off += ext_len
        plen, crc = _TAIL.unpack_from(data, off)
        off += _TAIL.size
        payload = bytes(data[off:off + plen])
        if len(payload) != plen:
            raise CorruptionError(f"payload truncated: {len(payload)} of {plen} bytes")
        if len(data) != off + plen:
            raise FormatError("trailing bytes after payload")
        if zlib.crc32(payload) != crc:
            raise CorruptionError("payload checksum mismatch")
        return cls(codec, param, count, tuple(box[:3]), tuple(box[3:]), payload,
                   profile, ext, version)


def f32_box(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Round a box outward to float32 so the header reproduces it exactly."""
    lo32 = np.asarray(lo, dtype=np.float32)
    hi32 = np.asarray(hi, dtype=np.float32)
    lo32 = np.where(lo32.astype(np.float64) > lo, np.nextafter(lo32, np.float32(-np.inf)), lo32)
    hi32 = np.where(hi32.astype(np.float64) < hi, np.nextafter(hi32, np.float32(np.inf)), hi32)
    return lo32.astype(np.float64), hi32.astype(np.float64)
