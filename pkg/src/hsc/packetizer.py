"""Application-layer fragmentation of encoded frames into UDP-sized packets.

Wire layout (little-endian), 12-byte header then payload::

    frame_id u32 | fragment_index u16 | fragment_count u16 | tier u8 | flags u8 | payload_len u16

``flags`` bit 0 marks the last fragment of a frame; bits 4-7 carry the
header version (currently 0).
"""

from __future__ import annotations

import math
import struct
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .errors import InvalidParameterError, OversizeError, ProtocolError
from .frame import EncodedFrame

HEADER = struct.Struct("<IHHBBH")
HEADER_SIZE = HEADER.size
UDP_MAX = 65535
UDP_IPV4_PAYLOAD = 65507
MAX_FRAGMENTS = 65535
FLAG_LAST = 0x01
POLICIES = ("drop-frame", "deliver-partial")


@dataclass(frozen=True)
class PacketizerConfig:
    size_limit: int = UDP_MAX
    loss_policy: str = "drop-frame"

    def __post_init__(self) -> None:
        if not HEADER_SIZE < self.size_limit <= UDP_MAX:
            raise InvalidParameterError(
                f"size limit must be in ({HEADER_SIZE}, {UDP_MAX}], got {self.size_limit}"
            )
        if self.loss_policy not in POLICIES:
            raise InvalidParameterError(f"loss policy must be one of {POLICIES}")

    @property
    def max_payload(self) -> int:
        return self.size_limit - HEADER_SIZE


@dataclass(frozen=True)
class Packet:
    frame_id: int
    fragment_index: int
    fragment_count: int
    tier: int
    flags: int
    payload: bytes

    @property
    def is_last(self) -> bool:
        return bool(self.flags & FLAG_LAST)

    def to_bytes(self) -> bytes:
        return HEADER.pack(self.frame_id, self.fragment_index, self.fragment_count,
                           self.tier, self.flags, len(self.payload)) + self.payload

    def __len__(self) -> int:
        return HEADER_SIZE + len(self.payload)

    @classmethod
    def from_bytes(cls, data: bytes) -> Packet:
        if len(data) < HEADER_SIZE:
            raise ProtocolError(f"datagram of {len(data)} bytes is shorter than the header")
        fid, idx, count, tier, flags, plen = HEADER.unpack_from(data)
        if len(data) != HEADER_SIZE + plen:
            raise ProtocolError(f"payload_len {plen} disagrees with datagram size {len(data)}")
        if idx >= count:
            raise ProtocolError(f"fragment index {idx} out of range for count {count}")
        return cls(fid, idx, count, tier, flags, bytes(data[HEADER_SIZE:]))


@dataclass
class Reassembly:
    frames: dict[int, EncodedFrame | bytes] = field(default_factory=dict)
    partial: dict[int, bytes] = field(default_factory=dict)
    # frame_id -> sorted missing fragment indices
    lost: dict[int, list[int]] = field(default_factory=dict)
    tiers: dict[int, int] = field(default_factory=dict)


def fragment_count(frame_len: int, cfg: PacketizerConfig) -> int:
    return max(1, math.ceil(frame_len / cfg.max_payload))


def packetize(frames: Sequence[tuple[int, EncodedFrame | bytes]],
              cfg: PacketizerConfig | None = None, first_id: int = 0) -> list[Packet]:
    """Fragment ``(tier, frame)`` pairs in order; frame ids count from ``first_id``."""
    cfg = cfg or PacketizerConfig()
    packets: list[Packet] = []
    prev_tier = -1
    for n, (tier, frame) in enumerate(frames):
        if not 0 <= tier <= 0xFF:
            raise InvalidParameterError(f"tier {tier} does not fit a byte")
        if tier < prev_tier:
            raise InvalidParameterError("frames must be given in tier-ascending order")
        prev_tier = tier
        data = frame.to_bytes() if isinstance(frame, EncodedFrame) else bytes(frame)
        count = fragment_count(len(data), cfg)
        if count > MAX_FRAGMENTS:
            raise OversizeError(f"frame of {len(data)} bytes needs {count} fragments")
        fid = (first_id + n) & 0xFFFFFFFF
        step = cfg.max_payload
        for i in range(count):
            flags = FLAG_LAST if i == count - 1 else 0
            packets.append(Packet(fid, i, count, tier, flags, data[i * step:(i + 1) * step]))
    return packets


class Reassembler:
    """Incremental reassembly; :meth:`add` returns a frame's bytes once complete."""

    def __init__(self, cfg: PacketizerConfig | None = None) -> None:
        self.cfg = cfg or PacketizerConfig()
        self._pieces: dict[int, dict[int, bytes]] = {}
        self._counts: dict[int, int] = {}
        self.tiers: dict[int, int] = {}
        self.done: set[int] = set()

    def add(self, pkt: Packet | bytes) -> bytes | None:
        if not isinstance(pkt, Packet):
            pkt = Packet.from_bytes(pkt)
        fid = pkt.frame_id
        known = self._counts.setdefault(fid, pkt.fragment_count)
        if known != pkt.fragment_count:
            raise ProtocolError(f"frame {fid}: fragment_count {pkt.fragment_count} after {known}")
        self.tiers.setdefault(fid, pkt.tier)
        if fid in self.done:
            return None
        got = self._pieces.setdefault(fid, {})
        got.setdefault(pkt.fragment_index, pkt.payload)
        if len(got) < known:
            return None
        self.done.add(fid)
        del self._pieces[fid]
        return b"".join(got[i] for i in range(known))

    def incomplete(self) -> dict[int, list[int]]:
        return {fid: [i for i in range(self._counts[fid]) if i not in got]
                for fid, got in sorted(self._pieces.items())}

    def partial(self, fid: int) -> bytes:
        # contiguous prefix only; later pieces cannot be placed without it
        got = self._pieces.get(fid, {})
        prefix = []
        for i in range(self._counts.get(fid, 0)):
            if i not in got:
                break
            prefix.append(got[i])
        return b"".join(prefix)


def reassemble(packets: Iterable[Packet | bytes], cfg: PacketizerConfig | None = None,
               parse: bool = True) -> Reassembly:
    """Rebuild frames from packets in any order; duplicates are ignored.

    With ``parse=False`` complete frames are returned as raw bytes.
    """
    r = Reassembler(cfg)
    out = Reassembly()
    complete = {}
    for pkt in packets:
        if not isinstance(pkt, Packet):
            pkt = Packet.from_bytes(pkt)
        data = r.add(pkt)
        if data is not None:
            complete[pkt.frame_id] = data
    for fid in sorted(complete):
        out.frames[fid] = EncodedFrame.from_bytes(complete[fid]) if parse else complete[fid]
    out.lost = r.incomplete()
    if r.cfg.loss_policy == "deliver-partial":
        out.partial = {fid: r.partial(fid) for fid in out.lost}
    out.tiers = dict(r.tiers)
    return out


def fits_single_packet(frame: EncodedFrame | bytes | int, cfg: PacketizerConfig | None = None) -> bool:
    cfg = cfg or PacketizerConfig()
    size = frame if isinstance(frame, int) else len(frame)
    return size <= cfg.max_payload
