import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from o2rnav.grid import (ChannelSpec, GridStack, Pose2D, RasterFormatError, cell_center, metric_to_cell,
                         new_grid, normalize_angle, read_raster, semantic_channel_specs, transform,
                         write_raster)


def test_new_grid_zero_init_and_order():
    g = new_grid(10, 10, 0.05, ["occupancy", "explored"])
    assert g.data.shape == (2, 10, 10)
    assert not g.data.any()
    assert g.names == ["occupancy", "explored"]


@pytest.mark.parametrize("h,w,res", [(0, 5, 0.05), (5, -1, 0.05), (5, 5, 0.0), (5, 5, -0.1)])
def test_new_grid_rejects_bad_arguments(h, w, res):
    with pytest.raises(ValueError):
        new_grid(h, w, res, ["occupancy"])


def test_semantic_map_extent():
    objects = [f"o{i}" for i in range(15)]
    g = new_grid(480, 480, 0.05, semantic_channel_specs(objects))
    assert len(g.channels) == 17
    assert g.extent_m() == pytest.approx((24.0, 24.0))


def test_channel_spec_parsing_and_names():
    spec = ChannelSpec.parse("room:child's room")
    assert spec.kind == "room" and spec.category == "child's room"
    assert spec.name == "room_childs_room"
    assert ChannelSpec.parse({"kind": "potential", "name": "area"}).name == "area"
    with pytest.raises(ValueError):
        ChannelSpec("bogus")


def test_pose_normalization_range():
    for theta in [-3 * math.pi, -math.pi, 0.0, math.pi, 7.5]:
        t = normalize_angle(theta)
        assert -math.pi <= t < math.pi
    assert Pose2D(0, 0, math.pi).theta == -math.pi


@given(st.integers(1, 40), st.integers(1, 40), st.sampled_from([0.05, 0.1, 0.25, 1.0]))
def test_cell_metric_round_trip(h, w, res):
    for r in range(0, h, max(1, h // 5)):
        for c in range(0, w, max(1, w // 5)):
            x, y = cell_center(r, c, res)
            assert x == pytest.approx((c + 0.5) * res)
            assert y == pytest.approx((r + 0.5) * res)
            assert metric_to_cell(x, y, res) == (r, c)


def _random_grid(rng, h, w, res=0.05):
    specs = [ChannelSpec("occupancy", "obstacle"), ChannelSpec("explored", "explored"),
             ChannelSpec("object", category="bed"), ChannelSpec("room", category="bathroom"),
             ChannelSpec("potential", "area"), ChannelSpec("scalar", "dist")]
    g = new_grid(h, w, res, specs)
    for k in range(4):
        g.data[k] = rng.random((h, w)) < 0.3
    g.data[4] = rng.uniform(-1, 1, (h, w))
    g.data[5] = rng.normal(0, 10, (h, w))
    g.data[5][0, 0] = np.inf
    return g


def test_transform_identity_is_bit_identical():
    g = _random_grid(np.random.default_rng(0), 12, 17)
    out = transform(g, 0.0, 0, 0)
    assert np.array_equal(out.data.view(np.uint32), g.data.view(np.uint32))


def test_transform_half_turn_twice_is_identity_on_even_grids():
    g = _random_grid(np.random.default_rng(1), 16, 10)
    twice = transform(transform(g, math.pi, 0, 0), math.pi, 0, 0)
    assert np.array_equal(twice.data.view(np.uint32), g.data.view(np.uint32))


def test_transform_keeps_masks_binary():
    g = _random_grid(np.random.default_rng(2), 20, 20)
    out = transform(g, math.pi / 7, 3, -2)
    for k in range(4):
        assert set(np.unique(out.data[k])) <= {0.0, 1.0}
    out.validate()


def test_transform_translation_moves_content():
    g = new_grid(10, 10, 0.1, ["occupancy"])
    g.data[0, 4, 4] = 1
    out = transform(g, 0.0, 3, -2)
    assert out.data[0, 2, 7] == 1 and out.data[0].sum() == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 25), st.integers(1, 25), st.integers(0, 2 ** 32 - 1),
       st.floats(-math.pi, math.pi), st.integers(-5, 5), st.integers(-5, 5))
def test_transform_never_leaves_legal_values(h, w, seed, angle, dx, dy):
    g = _random_grid(np.random.default_rng(seed), h, w)
    g.data[5] = 0  # scalar channel has no legal set
    out = transform(g, angle, dx, dy)
    out.validate()


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2 ** 32 - 1),
       st.sampled_from([0.05, 0.1, 0.3]))
def test_raster_round_trip_bit_exact(tmp_path_factory, h, w, seed, res):
    g = _random_grid(np.random.default_rng(seed), h, w, res)
    g.meta = {"scene_id": "s", "seed": seed}
    path = tmp_path_factory.mktemp("r") / "grid"
    write_raster(g, path)
    back = read_raster(path)
    assert back.channels == g.channels
    assert back.resolution == g.resolution and back.meta == g.meta
    assert np.array_equal(back.data.view(np.uint32), g.data.view(np.uint32))


def test_raster_payload_is_little_endian_f32(tmp_path):
    g = new_grid(2, 3, 0.05, ["scalar"])
    g.data[0] = np.arange(6).reshape(2, 3)
    write_raster(g, tmp_path / "g")
    raw = (tmp_path / "g" / "scalar.f32").read_bytes()
    assert raw == np.arange(6, dtype="<f4").tobytes()
    meta = json.loads((tmp_path / "g" / "meta.json").read_text())
    assert meta["byte_order"] == "little-endian" and meta["dtype"] == "f32"


def test_read_rejects_channel_count_mismatch(tmp_path):
    g = new_grid(4, 4, 0.05, ["occupancy", "explored"])
    write_raster(g, tmp_path / "g")
    meta = json.loads((tmp_path / "g" / "meta.json").read_text())
    meta["channels"].append({"kind": "potential", "name": "area"})
    (tmp_path / "g" / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(RasterFormatError, match="channels"):
        read_raster(tmp_path / "g")


def test_read_rejects_truncated_payload(tmp_path):
    g = new_grid(4, 4, 0.05, ["occupancy"])
    write_raster(g, tmp_path / "g")
    f = tmp_path / "g" / "occupancy.f32"
    f.write_bytes(f.read_bytes()[:-4])
    with pytest.raises(RasterFormatError, match="occupancy"):
        read_raster(tmp_path / "g")


@pytest.mark.parametrize("field,value", [("height", "ten"), ("resolution", -1), ("dtype", "f64")])
def test_read_rejects_malformed_header(tmp_path, field, value):
    g = new_grid(4, 4, 0.05, ["occupancy"])
    write_raster(g, tmp_path / "g")
    meta = json.loads((tmp_path / "g" / "meta.json").read_text())
    meta[field] = value
    (tmp_path / "g" / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(RasterFormatError, match=field):
        read_raster(tmp_path / "g")


def test_read_rejects_out_of_range_potential(tmp_path):
    g = new_grid(3, 3, 0.05, [ChannelSpec("potential", "area")])
    g.data[0, 1, 2] = 1.5
    write_raster(g, tmp_path / "g")
    with pytest.raises(RasterFormatError, match=r"area.*1\.5.*\(1, 2\)"):
        read_raster(tmp_path / "g")


def test_gridstack_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        GridStack(3, 3, 0.1, (ChannelSpec("occupancy"),), np.zeros((2, 3, 3), np.float32))
