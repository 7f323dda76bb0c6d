import csv
import io

import numpy as np
import pytest

from hsc import cli, synth
from hsc.frame import EncodedFrame
from hsc.metrics import MetricsReport
from hsc.pointcloud import read_scan
from hsc.semantic import ClassConfig

CFG = ClassConfig.default()


@pytest.fixture(scope="module")
def scan(tmp_path_factory):
    d = tmp_path_factory.mktemp("scan")
    path = d / "000000.bin"
    assert cli.main(["synth", "--seed", "3", "--out", str(path),
                     "--scene", "road:3000,car:800,person:200,building:2000,vegetation:900"]) == 0
    return path


def read_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_help_exit_zero(capsys):
    assert cli.main(["--help"]) == 0
    assert cli.main(["compress", "--help"]) == 0


@pytest.mark.parametrize("argv", [[], ["bogus"], ["compress"], ["compress", "x", "--q", "99"],
                                  ["compress", "x", "--level", "11"], ["sweep", "--codec", "zip"]])
def test_usage_errors_exit_one(argv):
    assert cli.main(argv) == 1


def test_data_errors_exit_two(tmp_path, scan):
    assert cli.main(["compress", str(tmp_path / "missing.bin")]) == 2
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"123")
    assert cli.main(["compress", str(bad)]) == 2
    assert cli.main(["decompress", str(bad)]) == 2
    assert cli.main(["compress", str(scan), "--profile", "hsc7"]) == 2


def test_compress_deterministic_and_counts(tmp_path, scan):
    cloud = read_scan(scan)
    outs = []
    for i, prof in enumerate(["hsc0", "hsc0", "hsc2"]):
        out = tmp_path / f"{i}.hscf"
        assert cli.main(["compress", str(scan), "--profile", prof, "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert EncodedFrame.from_bytes(outs[0]).point_count == len(cloud)
    dynamic = CFG.group_ids("vehicle") | CFG.group_ids("person")
    assert EncodedFrame.from_bytes(outs[2]).point_count == np.isin(cloud.class_ids, list(dynamic)).sum()


def test_octree_compress_decompress(tmp_path, scan):
    enc, dec = tmp_path / "o.hscf", tmp_path / "o.ply"
    assert cli.main(["compress", str(scan), "--codec", "octree", "--scale", "20",
                     "--out", str(enc)]) == 0
    assert cli.main(["decompress", str(enc), "--out", str(dec)]) == 0
    assert dec.read_bytes().startswith(b"ply")


def test_evaluate_identity(tmp_path, scan, capsys):
    out = tmp_path / "e.csv"
    assert cli.main(["evaluate", str(scan), str(scan), "--raw", "--out", str(out)]) == 0
    rows = read_rows(out.read_text())
    assert [r["reference"] for r in rows] == ["filtered", "raw"]
    for r in rows:
        assert float(r["chamfer"]) == 0.0 and r["psnr"] == "identical"


def test_evaluate_encoded(tmp_path, scan, capsys):
    enc = tmp_path / "k.hscf"
    cli.main(["compress", str(scan), "--q", "10", "--profile", "hsc1", "--out", str(enc)])
    capsys.readouterr()
    assert cli.main(["evaluate", str(scan), str(enc), "--profile", "hsc1"]) == 0
    (row,) = read_rows(capsys.readouterr().out)
    assert row["codec"] == "kdtree" and row["setting"] == "q=10"
    assert int(row["compressed_bytes"]) == enc.stat().st_size
    assert float(row["bpp"]) == pytest.approx(8 * enc.stat().st_size / int(row["compressed_points"]))
    assert float(row["psnr"]) > 0


def test_sweep_rows(tmp_path, scan):
    out = tmp_path / "s.csv"
    assert cli.main(["sweep", str(scan), "--synthetic", "1", "--q", "8-9", "--codec",
                     "kdtree,octree", "--scale", "10", "--profile", "hsc0,hsc2", "--reps",
                     "2", "--no-psnr", "--out", str(out)]) == 0
    text = out.read_text().splitlines()
    assert text[0].split(",") == MetricsReport.columns()
    rows = read_rows(out.read_text())
    assert len(rows) == 2 * 3 * 2
    assert all(len(r) == len(MetricsReport.columns()) and not r["error"] for r in rows)
    assert {r["setting"] for r in rows} == {"q=8", "q=9", "scale=10"}


def test_empty_sweep_header_only(capsys):
    assert cli.main(["sweep"]) == 0
    assert capsys.readouterr().out.strip().split(",") == MetricsReport.columns()


def test_synth_directory(tmp_path, capsys):
    assert cli.main(["synth", "--frames", "2", "--scene", "car:50", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "velodyne" / "000001.bin").exists()
    c = read_scan(tmp_path / "velodyne" / "000001.bin", tmp_path / "labels" / "000001.label")
    assert len(c) == 50 and set(c.class_ids.tolist()) == {10}


def test_stream_cli(tmp_path, scan, capsys):
    assert cli.main(["stream", str(scan), "--synthetic", "1", "--profile",
                     "hsc1", "--interval", "0"]) == 0
    cap = capsys.readouterr()
    rows = read_rows(cap.out)
    assert len(rows) == 2 and all(int(r["frames"]) == int(r["delivered"]) for r in rows)
    assert "frames delivered" in cap.err
    assert cli.main(["stream"]) == 2


def test_synth_bin_rejects_many_frames(tmp_path):
    assert cli.main(["synth", "--frames", "2", "--out", str(tmp_path / "x.bin")]) == 2
