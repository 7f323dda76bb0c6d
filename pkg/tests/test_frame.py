import struct

import pytest

from hsc.errors import CorruptionError, FormatError
from hsc.frame import CODEC_OCTREE, EncodedFrame


def sample():
    return EncodedFrame(codec=CODEC_OCTREE, param=7, point_count=42,
                        bbox_min=(-1.5, 0.0, 2.0), bbox_max=(3.0, 4.0, 5.0),
                        payload=b"\x01\x02\x03payload", profile=2, ext=struct.pack("<f", 10.0))


def test_roundtrip_and_length():
    f = sample()
    blob = f.to_bytes()
    assert len(blob) == len(f)
    assert blob[:4] == b"HSCF"
    assert EncodedFrame.from_bytes(blob) == f
    assert f.codec_name == "octree"


def test_header_fields_little_endian():
    blob = sample().to_bytes()
    assert blob[4:8] == bytes([1, CODEC_OCTREE, 7, 2])
    assert struct.unpack_from("<I", blob, 8)[0] == 42


def test_rejections():
    blob = sample().to_bytes()
    with pytest.raises(FormatError):
        EncodedFrame.from_bytes(blob[:10])
    with pytest.raises(FormatError):
        EncodedFrame.from_bytes(blob[:5] + b"\x07" + blob[6:])
    with pytest.raises(FormatError):
        EncodedFrame.from_bytes(blob + b"\0")
    with pytest.raises(CorruptionError):
        EncodedFrame.from_bytes(blob[:-1])
    with pytest.raises(CorruptionError):
        EncodedFrame.from_bytes(blob[:-1] + bytes([blob[-1] ^ 1]))
