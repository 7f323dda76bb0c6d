"""Codec dispatch shared by the CLI and the streaming harness."""

from __future__ import annotations

from dataclasses import dataclass

from . import kdtree_codec, octree_codec
from .errors import FormatError, InvalidParameterError
from .frame import CODEC_KDTREE, CODEC_OCTREE, PROFILE_CUSTOM, PROFILE_IDS, EncodedFrame
from .pointcloud import PointCloud

CODECS = ("kdtree", "octree")


@dataclass(frozen=True)
class CodecSettings:
    codec: str = "kdtree"
    q: int = 11
    level: int = kdtree_codec.DEFAULT_LEVEL
    scale: float = 10.0

    def __post_init__(self) -> None:
        if self.codec not in CODECS:
            raise InvalidParameterError(f"unknown codec {self.codec!r}")

    @property
    def label(self) -> str:
        return f"q={self.q}" if self.codec == "kdtree" else f"scale={self.scale:g}"


def profile_id(name: str) -> int:
    return PROFILE_IDS.get(name.lower().replace("-", ""), PROFILE_CUSTOM)


def encode_cloud(cloud: PointCloud, settings: CodecSettings, profile: int = 0) -> EncodedFrame:
    if settings.codec == "kdtree":
        return kdtree_codec.encode(cloud, settings.q, settings.level, profile)
    return octree_codec.encode_octree(cloud, settings.scale, profile)


def decode_frame(frame: EncodedFrame) -> PointCloud:
    if frame.codec == CODEC_KDTREE:
        return kdtree_codec.decode(frame)
    if frame.codec == CODEC_OCTREE:
        return octree_codec.decode_octree(frame)
    raise FormatError(f"unknown codec id {frame.codec}")
