"""Semantic-aware LiDAR point-cloud compression.

Class-based filtering (HSC-0/1/2 transmission levels), a KD-tree geometry
codec, an octree baseline, quality metrics and UDP packetization.
"""

from .codecs import CodecSettings, decode_frame, encode_cloud
from .errors import HSCError
from .frame import EncodedFrame
from .pointcloud import PointCloud, SemanticLabel, read_scan, write_scan
from .semantic import FilterProfile, builtin_profile, load_profile

__version__ = "0.1.0"

__all__ = [
    "CodecSettings",
    "EncodedFrame",
    "FilterProfile",
    "HSCError",
    "PointCloud",
    "SemanticLabel",
    "builtin_profile",
    "decode_frame",
    "encode_cloud",
    "load_profile",
    "read_scan",
    "write_scan",
]
