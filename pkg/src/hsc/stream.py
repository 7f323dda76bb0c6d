"""UDP loopback streaming check: tier-ordered sending, reassembly, decode.

The sender and receiver run as two threads that share nothing but the
socket.  Each keeps its own log; the logs are joined once both finish.
Both sides stamp events with ``time.perf_counter`` (one process, one clock).
"""

from __future__ import annotations

import socket
import threading
import time
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .codecs import decode_frame
from .errors import HSCError, TransportError
from .frame import EncodedFrame
from .packetizer import UDP_IPV4_PAYLOAD, Packet, PacketizerConfig, Reassembler, packetize
from .pointcloud import PointCloud

END_MARKER = b"HSC-END"
RCVBUF = 8 << 20


@dataclass
class _SendLog:
    # scan index -> send start time
    scan_start: dict[int, float] = field(default_factory=dict)
    # frame id -> scan index
    scan_of: dict[int, int] = field(default_factory=dict)
    packets_sent: int = 0
    bytes_sent: int = 0
    dropped: list[tuple[int, int]] = field(default_factory=list)
    error: BaseException | None = None


@dataclass
class _RecvLog:
    # frame id -> (reassembly time, tier)
    delivered: dict[int, tuple[float, int]] = field(default_factory=dict)
    decoded_at: dict[int, float] = field(default_factory=dict)
    decoded: dict[int, PointCloud] = field(default_factory=dict)
    lost: dict[int, list[int]] = field(default_factory=dict)
    packets_received: int = 0
    error: BaseException | None = None


@dataclass
class ScanTiming:
    scan: int
    frames: int
    delivered: int
    # None when some tier of the scan never arrived
    end_to_end_ms: float | None
    tier_first_ms: dict[int, float]


@dataclass
class StreamReport:
    scans: list[ScanTiming]
    packets_sent: int
    packets_received: int
    packets_dropped: int
    bytes_sent: int
    frames_sent: int
    frames_delivered: int
    # frame id -> missing fragment indices (receiver view)
    lost_frames: dict[int, list[int]]
    # frame ids whose fragments the sender dropped on purpose
    dropped_frames: set[int]
    decoded: dict[int, PointCloud]
    elapsed_s: float

    @property
    def throughput_mbps(self) -> float:
        return 8.0 * self.bytes_sent / max(self.elapsed_s, 1e-9) / 1e6


def _sender(sock, addr, scans, cfg, drop_rate, seed, interval, log: _SendLog) -> None:
    rng = np.random.default_rng(seed)
    fid = 0
    t0 = time.perf_counter()
    try:
        for s, frames in enumerate(scans):
            wait = t0 + s * interval - time.perf_counter()
            if wait > 0:
                time.sleep(wait)
            packets = packetize(frames, cfg, first_id=fid)
            for n in range(len(frames)):
                log.scan_of[fid + n] = s
            fid += len(frames)
            log.scan_start[s] = time.perf_counter()
            for pkt in packets:
                if drop_rate and rng.random() < drop_rate:
                    log.dropped.append((pkt.frame_id, pkt.fragment_index))
                    continue
                sock.sendto(pkt.to_bytes(), addr)
                log.packets_sent += 1
                log.bytes_sent += len(pkt)
        for _ in range(3):
            sock.sendto(END_MARKER, addr)
    except OSError as exc:
        log.error = TransportError(f"send failed: {exc}")
    except BaseException as exc:  # surfaced by the caller after join
        log.error = exc


def _receiver(sock, cfg, n_frames, timeout, decode, log: _RecvLog) -> None:
    r = Reassembler(cfg)
    try:
        while len(r.done) < n_frames:
            try:
                data, _ = sock.recvfrom(cfg.size_limit + 1)
            except socket.timeout:
                break
            if data == END_MARKER:
                break
            log.packets_received += 1
            pkt = Packet.from_bytes(data)
            frame = r.add(pkt)
            if frame is None:
                continue
            t = time.perf_counter()
            log.delivered[pkt.frame_id] = (t, pkt.tier)
            if decode:
                log.decoded[pkt.frame_id] = decode_frame(EncodedFrame.from_bytes(frame))
            log.decoded_at[pkt.frame_id] = time.perf_counter()
        log.lost = r.incomplete()
    except OSError as exc:
        log.error = TransportError(f"receive failed: {exc}")
    except BaseException as exc:
        log.error = exc


def run_loopback(scans: Sequence[Sequence[tuple[int, EncodedFrame]]],
                 cfg: PacketizerConfig | None = None, drop_rate: float = 0.0,
                 seed: int = 0, timeout: float = 2.0, decode: bool = True,
                 interval: float = 0.0, host: str = "127.0.0.1") -> StreamReport:
    """Stream each scan's tier-ordered frames over loopback UDP.

    ``drop_rate`` discards that fraction of fragments at the sender to
    emulate loss.  Scans are sent ``interval`` seconds apart (0 sends
    back to back).  End-to-end time runs from a scan's first send to the
    decode of its last frame; per-tier first delivery is when the first
    frame of that tier finished reassembly, relative to the scan start.
    """
    cfg = cfg or PacketizerConfig(UDP_IPV4_PAYLOAD)
    if cfg.size_limit > UDP_IPV4_PAYLOAD:
        raise TransportError(
            f"packet limit {cfg.size_limit} exceeds the IPv4 UDP payload maximum {UDP_IPV4_PAYLOAD}"
        )
    if not 0.0 <= drop_rate < 1.0:
        raise HSCError(f"drop rate must be in [0, 1), got {drop_rate}")
    n_frames = sum(len(s) for s in scans)
    try:
        rx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        tx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    except OSError as exc:
        raise TransportError(f"cannot open UDP socket: {exc}") from exc
    slog, rlog = _SendLog(), _RecvLog()
    with rx, tx:
        try:
            rx.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, RCVBUF)
            tx.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, RCVBUF)
            rx.bind((host, 0))
            rx.settimeout(timeout)
            addr = rx.getsockname()
        except OSError as exc:
            raise TransportError(f"cannot bind loopback socket: {exc}") from exc
        recv = threading.Thread(target=_receiver, args=(rx, cfg, n_frames, timeout, decode, rlog))
        send = threading.Thread(target=_sender,
                                args=(tx, addr, scans, cfg, drop_rate, seed, interval, slog))
        t0 = time.perf_counter()
        recv.start()
        send.start()
        send.join()
        recv.join()
        elapsed = time.perf_counter() - t0
    for err in (slog.error, rlog.error):
        if err is not None:
            raise err

    timings = []
    for s, frames in enumerate(scans):
        ids = [f for f, sc in slog.scan_of.items() if sc == s]
        start = slog.scan_start[s]
        got = [rlog.delivered[f] for f in ids if f in rlog.delivered]
        first: dict[int, float] = {}
        for t, tier in got:
            ms = (t - start) * 1e3
            first[tier] = min(first.get(tier, ms), ms)
        done = [rlog.decoded_at[f] for f in ids if f in rlog.decoded_at]
        e2e = (max(done) - start) * 1e3 if len(done) == len(ids) and done else None
        timings.append(ScanTiming(s, len(ids), len(got), e2e, dict(sorted(first.items()))))

    # frames whose every fragment was dropped never reach the receiver at all
    lost = dict(rlog.lost)
    for fid in slog.scan_of:
        if fid not in rlog.delivered and fid not in lost:
            lost[fid] = sorted(i for f, i in slog.dropped if f == fid)
    return StreamReport(
        scans=timings,
        packets_sent=slog.packets_sent,
        packets_received=rlog.packets_received,
        packets_dropped=len(slog.dropped),
        bytes_sent=slog.bytes_sent,
        frames_sent=n_frames,
        frames_delivered=len(rlog.delivered),
        lost_frames=dict(sorted(lost.items())),
        dropped_frames={f for f, _ in slog.dropped},
        decoded=rlog.decoded,
        elapsed_s=elapsed,
    )
