"""``hsc`` command line: compress, decompress, evaluate, sweep, synth, stream.

Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import logging
import math
import sys
from pathlib import Path

from . import bench, metrics, semantic, stream, synth
from .codecs import CODECS, CodecSettings, decode_frame, encode_cloud, profile_id
from .errors import HSCError
from .frame import EncodedFrame
from .kdtree_codec import DEFAULT_LEVEL, MAX_LEVEL, MAX_Q
from .packetizer import POLICIES, UDP_IPV4_PAYLOAD, PacketizerConfig
from .pointcloud import KITTI_RECORD, PointCloud, export_ply, write_scan

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("hsc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _q(text: str) -> int:
    q = int(text)
    if not 0 <= q <= MAX_Q:
        raise argparse.ArgumentTypeError(f"q must be in 0..{MAX_Q}")
    return q


def _level(text: str) -> int:
    v = int(text)
    if not 0 <= v <= MAX_LEVEL:
        raise argparse.ArgumentTypeError(f"level must be in 0..{MAX_LEVEL}")
    return v


def _scale(text: str) -> float:
    v = float(text)
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError("scale must be a positive number")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _listof(kind):
    def parse(text: str):
        items = [t for t in text.split(",") if t]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        out = []
        for t in items:
            if kind is _q and "-" in t.strip("-"):
                lo, hi = t.split("-")
                out += [_q(str(v)) for v in range(int(lo), int(hi) + 1)]
            else:
                out.append(kind(t))
        return tuple(out)
    return parse


def _codec_name(text: str) -> str:
    if text not in CODECS:
        raise argparse.ArgumentTypeError(f"codec must be one of {CODECS}")
    return text


def _add_codec(p: argparse.ArgumentParser) -> None:
    p.add_argument("--codec", type=_codec_name, default="kdtree")
    p.add_argument("--q", type=_q, default=11, help="kdtree quantization bits per axis")
    p.add_argument("--level", type=_level, default=DEFAULT_LEVEL,
                   help="kdtree compression level (context modelling effort)")
    p.add_argument("--scale", type=_scale, default=10.0, help="octree cells per meter")


def _add_semantic(p: argparse.ArgumentParser, default: str = "hsc0") -> None:
    p.add_argument("--profile", default=default, help="hsc0, hsc1, hsc2 or a profile file")
    p.add_argument("--classes", help="class config file (default: bundled Semantic KITTI table)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hsc", description="Semantic-aware LiDAR point-cloud compression toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("compress", help="filter and encode one scan to .hscf")
    p.add_argument("input")
    p.add_argument("--labels", help="label file (default: auto-detected sidecar)")
    _add_codec(p)
    _add_semantic(p)
    p.add_argument("--reps", type=_positive, default=1, help="timed encode repetitions")
    p.add_argument("--out")

    p = sub.add_parser("decompress", help="decode .hscf to .bin or .ply")
    p.add_argument("input")
    p.add_argument("--reps", type=_positive, default=1)
    p.add_argument("--out")

    p = sub.add_parser("evaluate", help="metrics of a decoded cloud against its original")
    p.add_argument("original")
    p.add_argument("decoded", help=".hscf, .bin or .ply")
    p.add_argument("--labels")
    _add_semantic(p)
    p.add_argument("--raw", action="store_true",
                   help="add a row measured against the unfiltered original")
    p.add_argument("--k", type=_positive, default=metrics.DEFAULT_K, help="normal neighbours")
    p.add_argument("--reps", type=_positive, default=1, help="timed decode repetitions")
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("sweep", help="codec x setting x profile sweep over frames")
    p.add_argument("inputs", nargs="*", help=".bin scans, or synth:<seed>")
    p.add_argument("--codec", type=_listof(_codec_name), default=("kdtree",))
    p.add_argument("--q", type=_listof(_q), default=tuple(range(8, 15)),
                   help="comma list or range, e.g. 8-14")
    p.add_argument("--level", type=_level, default=DEFAULT_LEVEL)
    p.add_argument("--scale", type=_listof(_scale), default=(1.0, 10.0, 100.0))
    p.add_argument("--profile", type=_listof(str), default=("hsc0", "hsc1", "hsc2"))
    p.add_argument("--classes")
    p.add_argument("--synthetic", type=int, default=0, metavar="N",
                   help="append N synthetic frames seeded from --seed")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--reps", type=_positive, default=50)
    p.add_argument("--k", type=_positive, default=metrics.DEFAULT_K)
    p.add_argument("--no-psnr", action="store_true", help="skip the PSNR column")
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("synth", help="write deterministic labeled scenes")
    p.add_argument("--scene", help="name:count[:shape],... (default: full street scene)")
    p.add_argument("--classes")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--frames", type=_positive, default=1)
    p.add_argument("--out", required=True,
                   help="x.bin for one frame, else a directory (velodyne/ + labels/)")

    p = sub.add_parser("stream", help="loopback UDP streaming check")
    p.add_argument("inputs", nargs="*")
    _add_codec(p)
    _add_semantic(p)
    p.add_argument("--synthetic", type=int, default=0, metavar="N")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--limit", type=int, default=UDP_IPV4_PAYLOAD, help="packet size limit")
    p.add_argument("--loss-policy", choices=POLICIES, default="drop-frame")
    p.add_argument("--drop", type=float, default=0.0, help="fragment drop rate at the sender")
    p.add_argument("--interval", type=float, default=0.1, help="seconds between scans")
    p.add_argument("--out", help="CSV path (default stdout)")
    return ap


def _class_config(path: str | None) -> semantic.ClassConfig:
    return semantic.ClassConfig.load(path) if path else semantic.ClassConfig.default()


def _settings(args) -> CodecSettings:
    return CodecSettings(args.codec, args.q, args.level, args.scale)


def _open_out(path: str | None):
    if path:
        return open(path, "w", newline="", encoding="utf-8")
    return contextlib.nullcontext(sys.stdout)


def cmd_compress(args) -> int:
    cfg = _class_config(args.classes)
    cloud = bench.load_cloud(args.input, args.labels)
    profile = semantic.load_profile(args.profile, cfg)
    outcome, ft = bench.timed(lambda: semantic.filter(cloud, profile), 1, warmup=False)
    kept = outcome.kept
    if len(kept) == 0:
        raise HSCError(f"profile {profile.name} removed every point")
    settings = _settings(args)
    frame, et = bench.timed(lambda: encode_cloud(kept, settings, profile_id(profile.name)), args.reps)
    blob = frame.to_bytes()
    out = Path(args.out) if args.out else Path(args.input).with_suffix(".hscf")
    out.write_bytes(blob)
    med, _ = bench.median_p95(et)
    print(f"{out}: {len(cloud)} -> {len(kept)} points ({frame.point_count} coded), "
          f"{len(blob)} bytes, {metrics.bpp(len(blob), frame.point_count):.4f} bpp, "
          f"ratio {metrics.compression_ratio(KITTI_RECORD * len(cloud), len(blob)):.2f}, "
          f"{settings.codec} {settings.label}, profile {profile.name}, "
          f"encode {med:.2f} ms, filter {ft[0]:.2f} ms")
    return EXIT_OK


def cmd_decompress(args) -> int:
    blob = Path(args.input).read_bytes()
    cloud, dt = bench.timed(lambda: decode_frame(EncodedFrame.from_bytes(blob)), args.reps)
    out = Path(args.out) if args.out else Path(args.input).with_suffix(".decoded.bin")
    if out.suffix == ".ply":
        out.write_bytes(export_ply(cloud))
    else:
        write_scan(PointCloud(cloud.xyz), out)
    med, _ = bench.median_p95(dt)
    print(f"{out}: {len(cloud)} points, decode {med:.2f} ms")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _class_config(args.classes)
    original = bench.load_cloud(args.original, args.labels)
    profile = semantic.load_profile(args.profile, cfg)
    row = metrics.MetricsReport(frame=Path(args.original).name, profile=args.profile,
                                raw_points=len(original),
                                raw_bytes=KITTI_RECORD * len(original))
    if Path(args.decoded).suffix == ".hscf":
        blob = Path(args.decoded).read_bytes()
        frame = EncodedFrame.from_bytes(blob)
        decoded, dt = bench.timed(lambda: decode_frame(EncodedFrame.from_bytes(blob)), args.reps)
        row.codec = frame.codec_name
        row.setting = f"q={frame.param}" if row.codec == "kdtree" else f"depth={frame.param}"
        row.compression_level = str(frame.ext[0]) if row.codec == "kdtree" else ""
        row.compressed_points = frame.point_count
        row.compressed_bytes = len(blob)
        row.bpp = metrics.bpp(len(blob), frame.point_count)
        row.bpp_raw = metrics.bpp(len(blob), len(original))
        row.ratio = metrics.compression_ratio(row.raw_bytes, len(blob))
        row.decode_ms, row.decode_p95_ms = bench.median_p95(dt)
    else:
        decoded = bench.load_cloud(args.decoded)
        row.compressed_points = len(decoded)
    outcome, ft = bench.timed(lambda: semantic.filter(original, profile), 1, warmup=False)
    row.filter_ms = ft[0]
    refs = [("filtered", outcome.kept)]
    if args.raw:
        refs.append(("raw", original))
    rows = []
    for name, ref in refs:
        r = dataclasses.replace(row, reference=name, input_points=len(ref))
        r.chamfer, r.chamfer_per_point, r.psnr = bench.quality(ref, decoded, args.k)
        rows.append(r)
    with _open_out(args.out) as fh:
        bench.write_csv(rows, fh)
    return EXIT_OK


def cmd_sweep(args) -> int:
    inputs = list(args.inputs) + [f"{bench.SYNTH_PREFIX}{args.seed + i}"
                                  for i in range(args.synthetic)]
    spec = bench.SweepSpec(inputs=inputs, codecs=args.codec, q_levels=args.q,
                           scales=args.scale, profiles=args.profile,
                           compression_level=args.level, reps=args.reps, k=args.k,
                           psnr=not args.no_psnr, classes=args.classes, workers=args.workers)
    # profiles are validated up front so a typo is a usage-level data error
    cfg = _class_config(args.classes)
    for p in spec.profiles:
        semantic.load_profile(p, cfg)
    rows = bench.sweep(spec)
    with _open_out(args.out) as fh:
        bench.write_csv(rows, fh)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _class_config(args.classes)
    out = Path(args.out)
    single = out.suffix == ".bin"
    if single and args.frames != 1:
        raise HSCError("a .bin output takes exactly one frame; give a directory for more")
    for i in range(args.frames):
        seed = args.seed + i
        spec = (synth.SyntheticSceneSpec.parse(args.scene, seed, cfg) if args.scene
                else synth.default_spec(seed))
        cloud = synth.generate(spec, cfg)
        if single:
            out.parent.mkdir(parents=True, exist_ok=True)
            path = out
        else:
            (out / "velodyne").mkdir(parents=True, exist_ok=True)
            (out / "labels").mkdir(parents=True, exist_ok=True)
            path = out / "velodyne" / f"{i:06d}.bin"
        write_scan(cloud, path)
        if not single:
            path.with_suffix(".label").replace(out / "labels" / f"{i:06d}.label")
        counts = ", ".join(f"{cfg.name_of(c)}={n}" for c, n in sorted(spec.counts().items()))
        print(f"{path}: {len(cloud)} points ({counts})")
    return EXIT_OK


def cmd_stream(args) -> int:
    cfg = _class_config(args.classes)
    profile = semantic.load_profile(args.profile, cfg)
    pcfg = PacketizerConfig(args.limit, args.loss_policy)
    settings = _settings(args)
    sources = list(args.inputs) + [f"{bench.SYNTH_PREFIX}{args.seed + i}"
                                   for i in range(args.synthetic)]
    if not sources:
        raise HSCError("no input frames to stream")
    pid = profile_id(profile.name)
    scans = []
    for src in sources:
        parts = semantic.partition_by_priority(bench.load_cloud(src), profile)
        scans.append([(tier, encode_cloud(part, settings, pid)) for tier, part in parts])
    rep = stream.run_loopback(scans, pcfg, drop_rate=args.drop, seed=args.seed,
                              interval=args.interval)
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scan", "source", "frames", "delivered", "end_to_end_ms", "tier_first_ms"])
        for t, src in zip(rep.scans, sources):
            e2e = "" if t.end_to_end_ms is None else f"{t.end_to_end_ms:.3f}"
            tiers = ";".join(f"{k}:{v:.3f}" for k, v in t.tier_first_ms.items())
            w.writerow([t.scan, src, t.frames, t.delivered, e2e, tiers])
    print(f"packets sent {rep.packets_sent}, dropped {rep.packets_dropped}, "
          f"received {rep.packets_received}; frames delivered {rep.frames_delivered}"
          f"/{rep.frames_sent}; lost {sorted(rep.lost_frames)}; "
          f"{rep.throughput_mbps:.2f} Mbps", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"compress": cmd_compress, "decompress": cmd_decompress, "evaluate": cmd_evaluate,
            "sweep": cmd_sweep, "synth": cmd_synth, "stream": cmd_stream}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except HSCError as exc:
        print(f"hsc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"hsc: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"hsc: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
