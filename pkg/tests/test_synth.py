import numpy as np
import pytest

from hsc import synth
from hsc.errors import SpecError
from hsc.pointcloud import read_scan, write_scan
from hsc.semantic import ClassConfig

CFG = ClassConfig.default()


def test_default_scene_counts():
    spec = synth.default_spec(0)
    cloud = synth.generate(spec)
    assert len(cloud) == spec.total == 124_800
    ids, n = np.unique(cloud.class_ids, return_counts=True)
    assert dict(zip(ids.tolist(), n.tolist())) == spec.counts()
    present = {CFG.by_id[i].group for i in ids.tolist()}
    assert present == CFG.groups


def test_deterministic_and_seeded():
    a = synth.generate(synth.default_spec(4, 0.05))
    b = synth.generate(synth.default_spec(4, 0.05))
    c = synth.generate(synth.default_spec(5, 0.05))
    np.testing.assert_array_equal(a.xyz, b.xyz)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert not np.array_equal(a.xyz, c.xyz)


def test_parse_spec():
    spec = synth.SyntheticSceneSpec.parse("car:10, road:20:scatter, 50:5", seed=2)
    assert spec.counts() == {10: 10, 40: 20, 50: 5}
    assert [c.shape for c in spec.classes] == ["boxes", "scatter", "facade"]
    assert len(synth.generate(spec)) == 35


@pytest.mark.parametrize("text", ["car:0", "car", "car:x", "nothing:3", "vehicle:4",
                                  "car:3:blob"])
def test_bad_specs(text):
    with pytest.raises(SpecError):
        synth.SyntheticSceneSpec.parse(text)


def test_spec_field_errors():
    with pytest.raises(SpecError):
        synth.SyntheticSceneSpec((synth.ClassCount(10, -1, "boxes"),))
    with pytest.raises(SpecError):
        synth.SyntheticSceneSpec((synth.ClassCount(1 << 16, 1, "boxes"),))
    with pytest.raises(SpecError):
        synth.SyntheticSceneSpec((synth.ClassCount(10, 1, "boxes"),), seed=-1)


def test_float32_exact_file_roundtrip(tmp_path):
    cloud = synth.generate(synth.default_spec(1, 0.02))
    np.testing.assert_array_equal(cloud.xyz, cloud.xyz.astype(np.float32))
    write_scan(cloud, tmp_path / "s.bin")
    back = read_scan(tmp_path / "s.bin")
    np.testing.assert_array_equal(back.xyz, cloud.xyz)
    np.testing.assert_array_equal(back.labels, cloud.labels)
    np.testing.assert_array_equal(back.reflectance, cloud.reflectance)


def test_shape_geometry():
    spec = synth.SyntheticSceneSpec.parse("road:2000:plane,building:2000:facade", seed=0)
    c = synth.generate(spec)
    road = c.xyz[c.class_ids == 40]
    assert np.abs(road[:, :2]).max() <= synth.GROUND_R
    assert np.ptp(road[:, 2]) < 0.5
    assert np.ptp(c.xyz[c.class_ids == 50][:, 2]) > 5


def test_corpus():
    frames = synth.corpus(3, seed=7, scale=0.01)
    assert len(frames) == 3
    assert not np.array_equal(frames[0].xyz, frames[1].xyz)
