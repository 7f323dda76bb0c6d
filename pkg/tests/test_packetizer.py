import random
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsc import kdtree_codec as kd
from hsc.errors import InvalidParameterError, OversizeError, ProtocolError
from hsc.frame import EncodedFrame
from hsc.packetizer import (
    FLAG_LAST,
    HEADER_SIZE,
    Packet,
    PacketizerConfig,
    fits_single_packet,
    packetize,
    reassemble,
)
from hsc.pointcloud import PointCloud


def blob(n, seed=0):
    return np.random.default_rng(seed).integers(0, 256, n, dtype=np.uint8).tobytes()


def test_fragment_arithmetic():
    ps = packetize([(0, blob(200_000))])
    assert [len(p.payload) for p in ps] == [65_523] * 3 + [3_431]
    assert [p.is_last for p in ps] == [False, False, False, True]
    assert all(len(p) <= 65_535 for p in ps)
    assert len(packetize([(0, blob(65_523))])) == 1
    assert len(packetize([(0, blob(65_524))])) == 2


def test_tier_order():
    a, b = blob(10, 1), blob(10, 2)
    with pytest.raises(InvalidParameterError):
        packetize([(1, a), (0, b)])
    ps = packetize([(0, b), (1, a)])
    assert ps[0].tier == 0 and ps[0].payload == b and ps[1].tier == 1


def test_oversize():
    with pytest.raises(OversizeError):
        packetize([(0, bytes(65_535 * 2 + 1))], PacketizerConfig(size_limit=HEADER_SIZE + 2))


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        PacketizerConfig(size_limit=12)
    with pytest.raises(InvalidParameterError):
        PacketizerConfig(size_limit=70_000)
    with pytest.raises(InvalidParameterError):
        PacketizerConfig(loss_policy="retry")


def test_wire_format():
    p = Packet(0x01020304, 2, 5, 1, FLAG_LAST, b"abc")
    raw = p.to_bytes()
    assert raw == struct.pack("<IHHBBH", 0x01020304, 2, 5, 1, 1, 3) + b"abc"
    assert raw[:4] == bytes([4, 3, 2, 1])
    assert Packet.from_bytes(raw) == p
    with pytest.raises(ProtocolError):
        Packet.from_bytes(raw[:-1])
    with pytest.raises(ProtocolError):
        Packet.from_bytes(struct.pack("<IHHBBH", 0, 5, 5, 0, 0, 0))


def test_single_packet_rule():
    assert fits_single_packet(1000)
    assert fits_single_packet(65_523)
    assert not fits_single_packet(65_524)
    f = kd.encode(PointCloud(np.random.default_rng(0).normal(size=(100, 3))), 10)
    assert fits_single_packet(f) == (len(f.to_bytes()) <= 65_523)


def test_reassemble_frames_and_loss():
    rng = np.random.default_rng(3)
    frames = [(0, kd.encode(PointCloud(rng.normal(size=(n, 3))), 14)) for n in (10, 40_000)]
    ps = packetize(frames, PacketizerConfig(size_limit=20_000))
    assert len(ps) > 3
    out = reassemble(ps, PacketizerConfig(size_limit=20_000))
    assert out.frames == {0: frames[0][1], 1: frames[1][1]} and out.lost == {}
    missing = [p for p in ps if not (p.frame_id == 1 and p.fragment_index == 1)]
    out = reassemble(missing)
    assert list(out.frames) == [0] and out.lost == {1: [1]} and out.partial == {}
    part = reassemble(missing, PacketizerConfig(loss_policy="deliver-partial"))
    assert part.partial[1] == frames[1][1].to_bytes()[:19_988]


def test_inconsistent_fragment_count():
    ps = packetize([(0, blob(100))])
    bad = Packet(0, 0, 3, 0, 0, b"x")
    with pytest.raises(ProtocolError):
        reassemble(ps + [bad], parse=False)


def test_duplicates_ignored():
    ps = packetize([(0, blob(50_000))], PacketizerConfig(size_limit=10_000))
    out = reassemble(ps + ps[:2], PacketizerConfig(size_limit=10_000), parse=False)
    assert out.frames[0] == blob(50_000)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 5000)), max_size=8),
       st.integers(HEADER_SIZE + 1, 3000), st.randoms(use_true_random=False))
def test_roundtrip_any_order(spec, limit, shuffler):
    spec = sorted(spec, key=lambda t: t[0])
    frames = [(t, blob(n, i)) for i, (t, n) in enumerate(spec)]
    cfg = PacketizerConfig(size_limit=limit)
    ps = packetize(frames, cfg)
    assert all(len(p) <= limit for p in ps)
    tiers = [p.tier for p in ps]
    assert tiers == sorted(tiers)
    shuffler.shuffle(ps)
    wire = [p.to_bytes() for p in ps]
    out = reassemble(wire, cfg, parse=False)
    assert out.frames == {i: f for i, (_, f) in enumerate(frames)}
    assert out.lost == {}
