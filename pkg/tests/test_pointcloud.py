import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hsc.errors import (
    EmptyInputError,
    InvalidDataError,
    LabelCountError,
    MalformedFileError,
)
from hsc.pointcloud import (
    PointCloud,
    SemanticLabel,
    bounding_box,
    dump_kitti_bin,
    dump_kitti_labels,
    export_ply,
    load_kitti_bin,
    load_kitti_labels,
    parse_ply,
    read_scan,
    write_scan,
)


def test_load_two_records():
    data = struct.pack("<8f", 1.0, 2.0, 3.0, 0.5, -1.0, 0.0, 4.0, 0.0)
    c = load_kitti_bin(data)
    assert len(c) == 2
    np.testing.assert_array_equal(c.xyz, [[1, 2, 3], [-1, 0, 4]])
    np.testing.assert_array_equal(c.reflectance, [0.5, 0.0])
    assert c[0] == (1.0, 2.0, 3.0, 0.5)


def test_load_empty():
    c = load_kitti_bin(b"")
    assert len(c) == 0 and c.xyz.shape == (0, 3)


def test_load_bad_length():
    with pytest.raises(MalformedFileError):
        load_kitti_bin(b"\0" * 17)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_load_non_finite_reports_index(bad):
    rec = np.zeros((5, 4), dtype="<f4")
    rec[3, 1] = bad
    with pytest.raises(InvalidDataError) as ei:
        load_kitti_bin(rec.tobytes())
    assert ei.value.index == 3


def test_label_bit_layout():
    c = load_kitti_bin(b"\0" * 16)
    c = load_kitti_labels(struct.pack("<I", 0x00010028), c)
    assert c.label(0) == SemanticLabel(40, 1)
    assert c.class_ids[0] == 40 and c.instance_ids[0] == 1


def test_labels_empty_cloud():
    c = load_kitti_labels(b"", load_kitti_bin(b""))
    assert c.has_labels and len(c.labels) == 0


def test_label_count_mismatch():
    c = load_kitti_bin(b"\0" * 48)
    with pytest.raises(LabelCountError):
        load_kitti_labels(b"\0" * 8, c)
    with pytest.raises(LabelCountError):
        PointCloud(np.zeros((3, 3)), labels=np.zeros(2, dtype=np.uint32))


@given(st.integers(0, 0xFFFF), st.integers(0, 0xFFFF))
def test_label_pack_roundtrip(cls, inst):
    word = SemanticLabel(cls, inst).pack()
    assert 0 <= word < 2**32
    assert SemanticLabel.unpack(word) == (cls, inst)


@given(arrays(np.float32, st.tuples(st.integers(0, 40), st.just(4)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_kitti_roundtrip_bit_exact(rec):
    data = rec.astype("<f4").tobytes()
    c = load_kitti_bin(data)
    assert dump_kitti_bin(c) == data


def test_bounding_box_examples(rng):
    c = PointCloud(np.array([[0, 0, 0], [1, 2, -3.0]]))
    b = bounding_box(c)
    np.testing.assert_array_equal(b.min, [0, 0, -3])
    np.testing.assert_array_equal(b.max, [1, 2, 0])
    one = bounding_box(PointCloud(np.array([[4.0, 5, 6]])))
    np.testing.assert_array_equal(one.min, one.max)
    pts = rng.normal(size=(1000, 3))
    b = bounding_box(PointCloud(pts))
    for a in range(3):
        assert b.min[a] == min(p[a] for p in pts)
        assert b.max[a] == max(p[a] for p in pts)
    assert b.contains(pts)
    with pytest.raises(EmptyInputError):
        bounding_box(PointCloud(np.zeros((0, 3))))


def test_ply_empty_and_counts():
    head = export_ply(PointCloud(np.zeros((0, 3)))).decode()
    assert "element vertex 0" in head
    two = export_ply(PointCloud(np.array([[0, 0, 0], [1, 1, 1.0]]))).decode()
    header, body = two.split("end_header\n")
    assert "element vertex 2" in header
    assert len(body.strip().splitlines()) == 2


def test_ply_reparse(rng):
    c = PointCloud(rng.uniform(-50, 50, (300, 3)), rng.uniform(0, 1, 300),
                   rng.integers(0, 260, 300).astype(np.uint32))
    back = parse_ply(export_ply(c))
    np.testing.assert_allclose(back.xyz, c.xyz, rtol=0, atol=1e-6)
    np.testing.assert_allclose(back.reflectance, c.reflectance, atol=1e-6)
    np.testing.assert_array_equal(back.class_ids, c.class_ids)


def test_ply_rejects_garbage():
    with pytest.raises(MalformedFileError):
        parse_ply(b"hello")


def test_scan_files_and_sidecar_search(tmp_path, rng):
    c = PointCloud(rng.normal(size=(20, 3)).astype(np.float32), rng.uniform(0, 1, 20).astype(np.float32),
                   rng.integers(0, 2**32, 20, dtype=np.uint64).astype(np.uint32))
    write_scan(c, tmp_path / "a.bin")
    back = read_scan(tmp_path / "a.bin")
    np.testing.assert_array_equal(back.labels, c.labels)
    (tmp_path / "velodyne").mkdir()
    (tmp_path / "labels").mkdir()
    (tmp_path / "velodyne" / "000.bin").write_bytes(dump_kitti_bin(c))
    (tmp_path / "labels" / "000.label").write_bytes(dump_kitti_labels(c))
    back = read_scan(tmp_path / "velodyne" / "000.bin")
    np.testing.assert_array_equal(back.labels, c.labels)
    np.testing.assert_array_equal(back.xyz, c.xyz)


def test_select_keeps_channels_in_order():
    c = PointCloud(np.arange(12.0).reshape(4, 3), np.arange(4.0), np.arange(4, dtype=np.uint32))
    s = c.select(np.array([True, False, True, True]))
    np.testing.assert_array_equal(s.labels, [0, 2, 3])
    np.testing.assert_array_equal(s.reflectance, [0, 2, 3])
