import hashlib

import numpy as np
import pytest

from spreadpool import (BevGridSpec, DatasetIOError, PoolGradients,
                        baseline_pool, gen_scene, read_gradients, read_map,
                        read_scene, scene_file_size, write_gradients,
                        write_map, write_scene)


SPEC = BevGridSpec(0.0, 0.0, 0.4, 250, 250)


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_same_seed_same_bytes(tmp_path):
    a = tmp_path / "a.sprd"
    b = tmp_path / "b.sprd"
    write_scene(a, gen_scene(SPEC, 5000, 16, seed=7).batch)
    write_scene(b, gen_scene(SPEC, 5000, 16, seed=7).batch)
    assert _digest(a) == _digest(b)
    c = tmp_path / "c.sprd"
    write_scene(c, gen_scene(SPEC, 5000, 16, seed=8).batch)
    assert _digest(a) != _digest(c)


def test_scene_round_trip(tmp_path):
    scene = gen_scene(SPEC, 1234, 5, seed=3)
    path = tmp_path / "scene.sprd"
    write_scene(path, scene.batch)
    back = read_scene(path)
    np.testing.assert_array_equal(back.positions, scene.batch.positions)
    np.testing.assert_array_equal(back.depths, scene.batch.depths)
    np.testing.assert_array_equal(back.features, scene.batch.features)


def test_empty_scene_is_valid(tmp_path):
    scene = gen_scene(SPEC, 0, 8, seed=0)
    path = tmp_path / "empty.sprd"
    write_scene(path, scene.batch)
    back = read_scene(path)
    assert back.n == 0
    assert not baseline_pool(back, SPEC).data.any()


def test_file_size_formula(tmp_path):
    path = tmp_path / "sized.sprd"
    write_scene(path, gen_scene(SPEC, 777, 12, seed=1).batch)
    assert path.stat().st_size == scene_file_size(777, 12)
    # header + n * (2*8 + 8 + 80*4) bytes at n = 1e6, C = 80
    assert scene_file_size(10 ** 6, 80) == 18 + 10 ** 6 * (16 + 8 + 320)


def test_bad_magic_and_version_rejected(tmp_path):
    scene = gen_scene(SPEC, 10, 2, seed=0)
    path = tmp_path / "scene.sprd"
    write_scene(path, scene.batch)
    raw = bytearray(path.read_bytes())

    bad = tmp_path / "bad_magic.sprd"
    bad.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(DatasetIOError, match="magic"):
        read_scene(bad)

    badv = tmp_path / "bad_version.sprd"
    raw2 = bytearray(raw)
    raw2[4] = 99
    badv.write_bytes(bytes(raw2))
    with pytest.raises(DatasetIOError, match="version"):
        read_scene(badv)

    trunc = tmp_path / "trunc.sprd"
    trunc.write_bytes(bytes(raw[:-5]))
    with pytest.raises(DatasetIOError, match="bytes"):
        read_scene(trunc)


def test_map_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    data = rng.standard_normal((7, 9, 3)).astype(np.float32)
    path = tmp_path / "map.sprb"
    write_map(path, data)
    np.testing.assert_array_equal(read_map(path), data)


def test_gradients_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    grads = PoolGradients(
        grad_features=rng.standard_normal((20, 4)).astype(np.float32),
        grad_alpha=-3.25,
        grad_depths=rng.standard_normal(20),
    )
    path = tmp_path / "grads.spgr"
    write_gradients(path, grads)
    back = read_gradients(path)
    np.testing.assert_array_equal(back.grad_features, grads.grad_features)
    np.testing.assert_array_equal(back.grad_depths, grads.grad_depths)
    assert back.grad_alpha == grads.grad_alpha


def test_unwritable_path_raises(tmp_path):
    with pytest.raises(DatasetIOError):
        write_scene(tmp_path / "no" / "such" / "dir.sprd",
                    gen_scene(SPEC, 5, 2, seed=0).batch)
