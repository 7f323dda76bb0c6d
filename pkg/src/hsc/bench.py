"""Benchmark plumbing: timed encode/decode, metric rows and sweeps.

Timings are wall-clock milliseconds of the codec call alone; filtering is
timed separately and file I/O is not timed.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, semantic, synth
from .codecs import CodecSettings, decode_frame, encode_cloud, profile_id
from .errors import EmptyInputError, HSCError, InsufficientPointsError
from .frame import EncodedFrame
from .pointcloud import KITTI_RECORD, PointCloud, parse_ply, read_scan

SYNTH_PREFIX = "synth:"


def timed(fn: Callable[[], object], reps: int, warmup: bool = True) -> tuple[object, list[float]]:
    """Run ``fn`` ``reps`` times; the last result and each call's milliseconds.

    The warm-up call keeps one-off JIT compilation or cache loading out of
    the measurement.
    """
    times = []
    result = fn() if warmup else None
    for _ in range(max(1, reps)):
        t = time.perf_counter()
        result = fn()
        times.append((time.perf_counter() - t) * 1e3)
    return result, times


def median_p95(times_ms: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(times_ms, dtype=np.float64)
    return float(np.median(a)), float(np.percentile(a, 95))


def load_cloud(source: str | os.PathLike, labels: str | None = None) -> PointCloud:
    """A ``.bin`` scan (labels sidecar auto-detected), ``.ply``, ``.hscf``
    (decoded) or ``synth:<seed>`` for a default synthetic scene."""
    s = str(source)
    if s.startswith(SYNTH_PREFIX):
        return synth.generate(synth.default_spec(int(s[len(SYNTH_PREFIX):])))
    path = Path(s)
    if path.suffix == ".ply":
        return parse_ply(path.read_bytes())
    if path.suffix == ".hscf":
        return decode_frame(EncodedFrame.from_bytes(path.read_bytes()))
    return read_scan(path, labels)


@dataclass
class SweepSpec:
    inputs: list[str]
    codecs: tuple[str, ...] = ("kdtree",)
    q_levels: tuple[int, ...] = (11,)
    scales: tuple[float, ...] = (10.0,)
    profiles: tuple[str, ...] = ("hsc0",)
    compression_level: int = 7
    reps: int = 50
    k: int = metrics.DEFAULT_K
    psnr: bool = True
    classes: str | None = None
    workers: int = 1
    settings: list[CodecSettings] = field(init=False)

    def __post_init__(self) -> None:
        self.settings = []
        for codec in self.codecs:
            if codec == "kdtree":
                self.settings += [CodecSettings("kdtree", q, self.compression_level)
                                  for q in self.q_levels]
            else:
                self.settings += [CodecSettings(codec, scale=s) for s in self.scales]
        if not self.settings or not self.profiles:
            raise HSCError("sweep has an empty codec x setting x profile product")
        for src in self.inputs:
            if not src.startswith(SYNTH_PREFIX) and not Path(src).exists():
                raise HSCError(f"input {src} does not exist")


def _class_config(path: str | None) -> semantic.ClassConfig:
    return semantic.ClassConfig.load(path) if path else semantic.ClassConfig.default()


def quality(reference: PointCloud, decoded: PointCloud, k: int, psnr: bool = True
            ) -> tuple[float, float, float | metrics.PsnrMarker]:
    """Chamfer sum, per-point Chamfer and symmetric PSNR (nan if skipped)."""
    cd = metrics.chamfer_sym(reference, decoded)
    cpp = metrics.chamfer_mean(reference, decoded)
    value: float | metrics.PsnrMarker = math.nan
    if psnr:
        try:
            value = metrics.psnr_sym(reference, decoded, k)
        except InsufficientPointsError:
            pass
    return cd, cpp, value


def frame_rows(name: str, cloud: PointCloud, spec: SweepSpec,
               cfg: semantic.ClassConfig | None = None) -> list[metrics.MetricsReport]:
    """One row per (setting, profile) for a single frame, errors as rows."""
    cfg = cfg or _class_config(spec.classes)
    rows = []
    for settings in spec.settings:
        for pname in spec.profiles:
            row = metrics.MetricsReport(
                frame=name, codec=settings.codec, setting=settings.label,
                compression_level=str(settings.level) if settings.codec == "kdtree" else "",
                profile=pname, reference="filtered", raw_points=len(cloud),
                raw_bytes=KITTI_RECORD * len(cloud))
            try:
                fill_row(row, cloud, settings, semantic.load_profile(pname, cfg), spec)
            except HSCError as exc:
                row.error = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def fill_row(row: metrics.MetricsReport, cloud: PointCloud, settings: CodecSettings,
             profile: semantic.FilterProfile, spec: SweepSpec) -> None:
    outcome, ft = timed(lambda: semantic.filter(cloud, profile), 1, warmup=False)
    kept = outcome.kept
    row.filter_ms = ft[0]
    row.input_points = len(kept)
    if len(kept) == 0:
        raise EmptyInputError(f"profile {profile.name} removed every point")
    pid = profile_id(profile.name)
    frame, et = timed(lambda: encode_cloud(kept, settings, pid), spec.reps)
    blob = frame.to_bytes()
    decoded, dt = timed(lambda: decode_frame(EncodedFrame.from_bytes(blob)), spec.reps)
    row.compressed_points = frame.point_count
    row.compressed_bytes = len(blob)
    row.bpp = metrics.bpp(len(blob), frame.point_count)
    row.bpp_raw = metrics.bpp(len(blob), len(cloud))
    row.ratio = metrics.compression_ratio(row.raw_bytes, len(blob))
    row.encode_ms, row.encode_p95_ms = median_p95(et)
    row.decode_ms, row.decode_p95_ms = median_p95(dt)
    row.chamfer, row.chamfer_per_point, row.psnr = quality(kept, decoded, spec.k, spec.psnr)


def _sweep_one(args: tuple[str, SweepSpec]) -> list[metrics.MetricsReport]:
    src, spec = args
    name = src if src.startswith(SYNTH_PREFIX) else Path(src).name
    try:
        cloud = load_cloud(src)
    except (HSCError, OSError) as exc:
        return [metrics.MetricsReport(frame=name, error=f"{type(exc).__name__}: {exc}")]
    return frame_rows(name, cloud, spec)


def sweep(spec: SweepSpec) -> list[metrics.MetricsReport]:
    """Rows ordered by input, then setting, then profile, for any worker count."""
    jobs = [(src, spec) for src in spec.inputs]
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(_sweep_one, jobs))
    else:
        chunks = [_sweep_one(j) for j in jobs]
    return [row for chunk in chunks for row in chunk]


def write_csv(rows: Iterable[metrics.MetricsReport], out: io.TextIOBase | str | os.PathLike) -> None:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_csv(rows, fh)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(metrics.MetricsReport.columns())
    for r in rows:
        w.writerow(r.row())
