"""Acceptance gate: the ten primary criteria at their stated tolerances.

Each test prints one ``ACCEPT <n> PASS|FAIL`` line; the lines are repeated
in the pytest terminal summary.  Run directly with
``python3 tests/test_acceptance.py`` for the lines alone.
"""

from __future__ import annotations

import contextlib
import math
import platform
import random
import time

import numpy as np
import pytest

from hsc import entropy as ec
from hsc import kdtree_codec as kd
from hsc import metrics, semantic, synth
from hsc import octree_codec as oc
from hsc.frame import EncodedFrame
from hsc.packetizer import PacketizerConfig, fits_single_packet, packetize, reassemble
from hsc.pointcloud import PointCloud
from oracles import (
    binary_entropy,
    brute_chamfer,
    brute_peak,
    brute_psnr,
    plane_grid,
    reference_quantize,
    reference_voxels,
    sorted_rows,
)

RESULTS: list[str] = []


@contextlib.contextmanager
def criterion(n: int, title: str):
    t = time.perf_counter()
    notes: list[str] = []
    try:
        yield notes
    except BaseException:
        line = f"ACCEPT {n:2d} FAIL  {title}"
        raise
    else:
        line = f"ACCEPT {n:2d} PASS  {title}"
    finally:
        extra = "; ".join(notes)
        line += f" [{time.perf_counter() - t:.1f} s{'; ' + extra if extra else ''}]"
        RESULTS.append(line)
        print(line)


def machine() -> str:
    model = platform.processor() or "unknown cpu"
    try:
        with open("/proc/cpuinfo", encoding="utf-8") as fh:
            names = [ln.split(":", 1)[1].strip() for ln in fh if ln.startswith("model name")]
        model = f"{names[0]} x{len(names)}" if names else model
    except OSError:
        pass
    return f"{model}, {platform.system()} {platform.release()}, Python {platform.python_version()}"


def test_kd_lossless_up_to_quantization():
    with criterion(1, "KD codec decodes the quantized-center multiset, error <= ext/2^(q+1)") as notes:
        start = time.perf_counter()
        worst = 0.0
        for cloud in synth.corpus(50, seed=100):
            for q in (0, 5, 10, 14):
                blob = kd.encode(cloud, q).to_bytes()
                back = kd.decode(EncodedFrame.from_bytes(blob))
                _, centers, ext = reference_quantize(cloud.xyz, q)
                assert np.array_equal(sorted_rows(back.xyz), sorted_rows(centers))
                err = np.abs(centers - cloud.xyz).max(axis=0)
                assert np.all(err <= ext / 2 ** (q + 1) + 1e-6)
                worst = max(worst, float((err / np.maximum(ext / 2 ** (q + 1), 1e-300)).max()))
        elapsed = time.perf_counter() - start
        notes.append(f"worst error {worst:.3f} of the bound")
        assert elapsed <= 120


def test_octree_voxel_roundtrip():
    with criterion(2, "octree voxel set round trip exact, d spans the bounding cube") as notes:
        start = time.perf_counter()
        for cloud in synth.corpus(20, seed=200, scale=0.25):
            for scale in (1.0, 10.0, 100.0):
                blob = oc.encode_octree(cloud, scale).to_bytes()
                back = oc.decode_voxels(EncodedFrame.from_bytes(blob))
                expected, d = reference_voxels(cloud.xyz, scale)
                assert {tuple(map(int, r)) for r in back.voxels} == expected
                assert len(back) == len(expected)
                m = int(back.voxels.max())
                assert back.params.depth == d == math.ceil(math.log2(m + 1))
                assert m < 2 ** d
        assert time.perf_counter() - start <= 60
        notes.append("20 frames x 3 scales")


def test_entropy_coder():
    with criterion(3, "range coder identity on 1e4 streams, Bernoulli(0.05) within 15% of entropy") as notes:
        rng = np.random.default_rng(3)
        for _ in range(10_000):
            n_ctx = int(rng.integers(1, 5))
            alpha = rng.integers(1, 300, n_ctx)
            n = int(rng.integers(0, 200))
            ctxs = rng.integers(0, n_ctx, n)
            syms = rng.integers(0, alpha[ctxs]) if n else np.zeros(0, int)
            model = ec.AdaptiveModel(alpha.tolist())
            payload = ec.encode_symbols((ctxs, syms), model.copy())
            assert ec.decode_symbols(payload, ctxs, model.copy()) == syms.tolist()
        n, p = 100_000, 0.05
        bits = (np.random.default_rng(5).random(n) < p).astype(int)
        payload = ec.encode_symbols((np.zeros(n, int), bits), ec.AdaptiveModel([2]))
        bound = n * binary_entropy(p) / 8
        notes.append(f"{len(payload)} bytes vs bound {bound:.0f}")
        assert len(payload) <= 1.15 * bound


def test_split_code_exhaustive():
    with criterion(4, "split code inverse for every n_total <= 64 and n_low") as notes:
        cases = 0
        for n_total in range(65):
            for n_low in range(n_total + 1):
                v, side = kd.split_code(n_total, n_low)
                assert v < 2 ** kd.code_width(n_total) or v == 0
                assert kd.split_decode(n_total, v, side) == n_low
                cases += 1
        notes.append(f"{cases} cases")
        assert cases == 65 * 66 // 2


def test_metric_oracles():
    with criterion(5, "Chamfer and peak match brute force, plane PSNR 6.02 dB, sym = min") as notes:
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = rng.normal(size=(int(rng.integers(2, 2001)), 3))
            b = rng.normal(size=(int(rng.integers(2, 2001)), 3))
            assert metrics.chamfer_sym(a, b) == pytest.approx(brute_chamfer(a, b), rel=1e-9)
            assert metrics.intrinsic_peak(a) == pytest.approx(brute_peak(a), rel=1e-9)
        plane = metrics.psnr_sym(plane_grid(20), plane_grid(20, z=0.5))
        notes.append(f"plane {plane:.4f} dB")
        assert abs(plane - 10 * math.log10(4)) <= 0.05
        for _ in range(20):
            a = rng.normal(size=(int(rng.integers(20, 400)), 3))
            b = a[rng.permutation(len(a))[: int(rng.integers(16, len(a) + 1))]]
            b = b + rng.normal(0, 0.05, b.shape)
            fwd, bwd = brute_psnr(a, b, 16), brute_psnr(b, a, 16)
            assert metrics.psnr_sym(a, b, 16) == pytest.approx(min(fwd, bwd), rel=1e-9)


def test_semantic_monotonicity():
    with criterion(6, "size and per-point Chamfer fall HSC-0 >= HSC-1 >= HSC-2, conservation") as notes:
        profiles = [semantic.builtin_profile(lv) for lv in semantic.LEVELS]
        cfg = semantic.ClassConfig.default()
        checks = 0
        for cloud in synth.corpus(10, seed=600):
            assert {cfg.by_id[int(c)].group for c in np.unique(cloud.class_ids)} == cfg.groups
            kept = []
            for prof in profiles:
                out = semantic.filter(cloud, prof)
                assert len(out.kept) + out.removed == len(cloud)
                kept.append(out.kept)
            for q in (6, 9, 11, 14):
                sizes, cds = [], []
                for part in kept:
                    f = kd.encode(part, q)
                    sizes.append(len(f.to_bytes()))
                    cds.append(metrics.chamfer_mean(part, kd.decode(f)))
                assert sizes[2] <= sizes[1] <= sizes[0]
                assert cds[2] <= cds[1] <= cds[0]
                checks += 1
        notes.append(f"{checks} frame x q cases")


def test_size_monotone_in_q():
    with criterion(7, "mean KD size strictly increases from q=6 to q=14") as notes:
        frames = synth.corpus(20, seed=700)
        means = [np.mean([len(kd.encode(c, q).to_bytes()) for c in frames]) for q in range(6, 15)]
        notes.append("means " + ",".join(f"{m:.0f}" for m in means))
        assert all(b > a for a, b in zip(means, means[1:]))


def test_single_packet_property():
    with criterion(8, "HSC-2 frame of <= 4000 dynamic points fits one packet at every q") as notes:
        cfg = PacketizerConfig()
        hsc2 = semantic.builtin_profile("hsc2")
        largest = 0
        for seed in range(10):
            spec = synth.SyntheticSceneSpec.parse(
                "car:3000,truck:300,person:500,bicyclist:200,road:30000,building:20000,"
                "vegetation:10000,traffic-sign:400", seed=seed)
            kept = semantic.filter(synth.generate(spec), hsc2).kept
            assert len(kept) <= 4000
            for q in range(15):
                f = kd.encode(kept, q)
                largest = max(largest, len(f.to_bytes()))
                assert fits_single_packet(f, cfg)
                (pkt,) = packetize([(0, f)], cfg)
                assert len(pkt) <= cfg.size_limit
        notes.append(f"largest frame {largest} bytes")
        big = [(t, kd.encode(p, 14)) for t, p in semantic.partition_by_priority(
            synth.generate(synth.default_spec(800)), semantic.builtin_profile("hsc0"))]
        pkts = packetize(big, cfg)
        assert len(pkts) > len(big)
        assert all(len(p) <= cfg.size_limit for p in pkts)
        r = random.Random(8)
        for _ in range(20):
            r.shuffle(pkts)
            out = reassemble([p.to_bytes() for p in pkts], cfg)
            assert out.frames == {i: f for i, (_, f) in enumerate(big)} and not out.lost


def _codec_ms(cloud: PointCloud, q: int, reps: int) -> float:
    kd.decode(kd.encode(cloud, q))
    totals = []
    for _ in range(reps):
        t = time.perf_counter()
        f = kd.encode(cloud, q)
        kd.decode(f)
        totals.append((time.perf_counter() - t) * 1e3)
    return float(np.median(totals))


def test_realtime_budget():
    with criterion(9, "median encode+decode of 120k points at q=11 <= 100 ms") as notes:
        full = synth.generate(synth.default_spec(900))
        idx = np.sort(np.random.default_rng(9).choice(len(full), 120_000, replace=False))
        cloud = full.select(idx)
        q11 = _codec_ms(cloud, 11, 50)
        notes.append(f"q=11 median {q11:.1f} ms on {machine()}")
        if q11 > 100:
            q9 = _codec_ms(cloud, 9, 50)
            notes.append(f"q=11 misses the budget, q=9 median {q9:.1f} ms")
            assert q9 <= 100


def test_required_bitrate():
    with criterion(10, "3,200,000 bytes every 100 ms needs 256 Mbps") as notes:
        mbps = metrics.required_bitrate(3_200_000, 0.1)
        notes.append(f"{mbps!r} Mbps")
        assert mbps == 256.0


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except Exception:  # the FAIL line is already printed
                failed += 1
    sys.exit(1 if failed else 0)
