import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diorama_forge.annotate import AreaMark, PositionMark, RouteMark
from diorama_forge.errors import DegenerateMesh, OutOfFrame, TooFewPoints
from diorama_forge.geometry import (
    NOMINAL_HEIGHT_M,
    OrthoCameraSpec,
    TerrainModel,
    WorldPoint,
    build_spline,
    compute_scale,
    ground_to_pixel,
    pixel_to_ground,
    polygon_area,
    project_annotation,
    render_base_map,
    terrain_height,
    winding_number,
)

CAM = OrthoCameraSpec(0.0, 0.0, 100.0, 100.0, 1000, 1000)


def plane_terrain(n=11, cell=10.0, origin=-50.0, fn=lambda e, n_: e / 10.0):
    coords = origin + cell * np.arange(n)
    ee, nn = np.meshgrid(coords, coords)
    return TerrainModel(fn(ee, nn), origin, origin, cell)


def bounds(h, w=1.0, d=1.0):
    return (-w / 2, 0.0, -d / 2), (w / 2, h, d / 2)


@pytest.mark.parametrize("uv,expected", [((500, 500), (0.0, 0.0)), ((0, 0), (-50.0, 50.0)), ((750, 250), (25.0, 25.0))])
def test_pixel_to_ground_examples(uv, expected):
    assert pixel_to_ground(*uv, CAM) == pytest.approx(expected, abs=1e-12)


def test_pixel_outside_frame():
    with pytest.raises(OutOfFrame):
        pixel_to_ground(-1, 10, CAM)


@settings(max_examples=200)
@given(st.floats(0, 1000), st.floats(0, 1000))
def test_round_trip(u, v):
    e, n = pixel_to_ground(u, v, CAM)
    u2, v2 = ground_to_pixel(e, n, CAM)
    assert abs(u2 - u) < 1e-9 and abs(v2 - v) < 1e-9


@given(st.floats(0, 999), st.floats(0, 999), st.floats(1e-3, 1))
def test_monotonic(u, v, du):
    e0, n0 = pixel_to_ground(u, v, CAM)
    e1, _ = pixel_to_ground(u + du, v, CAM)
    _, n1 = pixel_to_ground(u, v + du, CAM)
    assert e1 > e0 and n1 < n0


def test_constant_field():
    t = TerrainModel(np.full((4, 4), 5.0), 0.0, 0.0, 1.0)
    assert terrain_height(t, 1.3, 2.7) == 5.0
    assert terrain_height(t, -100, 100) == 5.0


def test_bilinear_cell_centre():
    t = TerrainModel(np.array([[0.0, 10.0], [10.0, 20.0]]), 0.0, 0.0, 1.0)
    assert terrain_height(t, 0.5, 0.5) == 10.0


def test_planar_field():
    t = plane_terrain(origin=0.0)
    assert terrain_height(t, 30.0, 45.0) == pytest.approx(3.0, abs=1e-9)


@given(st.integers(0, 9), st.integers(0, 9))
def test_grid_nodes_exact(i, j):
    rng = np.random.default_rng(4)
    h = rng.normal(0, 10, size=(10, 10))
    t = TerrainModel(h, -3.0, 7.0, 2.5)
    assert terrain_height(t, -3.0 + 2.5 * i, 7.0 + 2.5 * j) == h[j, i]


def test_terrain_dict_round_trip():
    t = plane_terrain()
    assert TerrainModel.from_dict(t.to_dict()) == t


def test_project_position_flat():
    t = TerrainModel.flat(0.0)
    assert project_annotation(PositionMark((500.0, 500.0)), CAM, t) == WorldPoint(0.0, 0.0, 0.0)


def test_project_route_on_plane():
    t = plane_terrain()
    wps = tuple((30.0 + 60 * i, 100.0 + 40 * i) for i in range(16))
    pts = project_annotation(RouteMark(wps[0], wps), CAM, t)
    assert len(pts) == 16
    for p in pts:
        assert abs(p.up - p.east / 10.0) < 1e-9


def test_project_area_scales_by_pixel_size():
    sq = ((100.0, 100.0), (400.0, 100.0), (400.0, 300.0), (100.0, 300.0))
    pts = project_annotation(AreaMark(sq), CAM, TerrainModel.flat())
    world = abs(polygon_area([(p.east, p.north) for p in pts]))
    pixel = abs(polygon_area(sq))
    assert world == pytest.approx(pixel * (100 / 1000) * (100 / 1000), rel=1e-6)


def test_spline_two_points_midpoint():
    a, b = WorldPoint(0, 0, 0), WorldPoint(10, 4, 2)
    mid = build_spline([a, b]).sample(0.5)
    assert mid == pytest.approx([5, 2, 1], abs=1e-9)


def test_spline_collinear():
    pts = [WorldPoint(3 * i, 2 * i, 0) for i in range(4)]
    s = build_spline(pts)
    for t in np.linspace(0, 1, 101):
        x, y, _ = s.sample(t)
        assert abs(2 * x - 3 * y) / math.hypot(2, 3) < 1e-9


def test_spline_quarter_circle():
    pts = [WorldPoint(10 * math.cos(a), 10 * math.sin(a), 0) for a in np.linspace(0, math.pi / 2, 4)]
    samples = build_spline(pts).sample_many(256)
    assert np.max(np.abs(np.hypot(samples[:, 0], samples[:, 1]) - 10)) < 0.5


def test_spline_passes_through_controls():
    pts = [WorldPoint(0, 0, 0), WorldPoint(5, 8, 1), WorldPoint(12, 3, 0), WorldPoint(20, 10, 2)]
    s = build_spline(pts)
    for i, p in enumerate(pts):
        assert s.sample(i / 3) == pytest.approx(p.to_list(), abs=1e-9)


def test_spline_needs_two_points():
    with pytest.raises(TooFewPoints):
        build_spline([WorldPoint(0, 0, 0)])


def test_spline_repeated_points_finite():
    pts = [WorldPoint(0, 0, 0), WorldPoint(0, 0, 0), WorldPoint(5, 5, 0)]
    assert np.all(np.isfinite(build_spline(pts).sample_many(50)))


# desk-scale routes: up to 16 waypoints, consecutive steps of at most 25 m
steps = st.lists(st.tuples(st.floats(-25, 25), st.floats(-25, 25), st.floats(-1, 1)), min_size=1, max_size=15)


@settings(max_examples=50, deadline=None)
@given(steps, st.floats(0, 1 - 1e-6))
def test_spline_continuous(deltas, t):
    pts = np.cumsum([(0.0, 0.0, 0.0), *deltas], axis=0)
    s = build_spline([WorldPoint(*p) for p in pts])
    assert np.linalg.norm(s.sample(t) - s.sample(t + 1e-6)) < 1e-3


def test_initial_heading_compass():
    east = build_spline([WorldPoint(0, 0, 0), WorldPoint(10, 0, 0)])
    north = build_spline([WorldPoint(0, 0, 0), WorldPoint(0, 10, 0)])
    assert east.initial_heading() == pytest.approx(90.0)
    assert north.initial_heading() == pytest.approx(0.0)


@pytest.mark.parametrize("h,size,expected", [(1.0, "medium", 2.0), (4.0, "large", 2.0), (2.0, "small", 0.25)])
def test_compute_scale(h, size, expected):
    assert compute_scale(bounds(h), size) == expected


def test_compute_scale_flat_mesh():
    with pytest.raises(DegenerateMesh):
        compute_scale(bounds(0.0), "medium")


@given(st.floats(1e-3, 1e3), st.sampled_from(["small", "medium", "large", "unknown"]))
def test_scale_times_extent_is_nominal(h, size):
    s = compute_scale(bounds(h), size)
    assert s > 0
    assert s * h == pytest.approx(NOMINAL_HEIGHT_M[size], rel=1e-12)


def test_winding_number_square():
    sq = [(0, 0), (10, 0), (10, 10), (0, 10)]
    assert winding_number((5, 5), sq) != 0
    assert winding_number((15, 5), sq) == 0


def test_base_map_grayscale_and_shape():
    cam = OrthoCameraSpec(0, 0, 200, 200, 64, 48)
    img = render_base_map(plane_terrain(fn=lambda e, n: np.sin(e / 20) * 5 + n / 30), cam)
    assert img.shape == (48, 64, 3) and img.dtype == np.uint8
    assert np.array_equal(img[..., 0], img[..., 1]) and np.array_equal(img[..., 1], img[..., 2])
