import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diorama_forge.annotate import (
    AREA,
    POSITION,
    ROUTE,
    AnnotatedCanvas,
    AreaMark,
    PositionMark,
    RouteMark,
    extract_area,
    extract_position,
    extract_route,
    is_simple_polygon,
    mark_from_dict,
    threshold_mask,
    verify_canvas_alignment,
)
from diorama_forge.errors import LoopedPath, MissingStartMarker, NoMark

from canvases import BLUE, RED, base_map, disc_mask, polygon_iou, point_to_polyline
from conftest import gray_base


def canvas(img, template, base=None):
    return AnnotatedCanvas(img, "e", template, base)


def shoelace(pts):
    p = np.asarray(pts, float)
    return 0.5 * abs(np.dot(p[:, 0], np.roll(p[:, 1], -1)) - np.dot(p[:, 1], np.roll(p[:, 0], -1)))


def test_threshold_examples():
    img = np.array([[[255, 0, 0], [0, 0, 255], [128, 128, 128]]], np.uint8)
    red, blue = threshold_mask(img, "red"), threshold_mask(img, "blue")
    assert red.tolist() == [[True, False, False]]
    assert blue.tolist() == [[False, True, False]]


def test_single_pixel_position():
    img = gray_base()
    img[20, 10] = RED
    assert extract_position(canvas(img, POSITION)) == PositionMark((10.0, 20.0))


def test_disc_centroid():
    img = gray_base(300, 300)
    mask = disc_mask(img.shape, 100, 150, 5)
    img[mask] = RED
    ys, xs = np.nonzero(mask)
    got = extract_position(canvas(img, POSITION)).pixel
    assert got == pytest.approx((xs.mean(), ys.mean()), abs=1e-9)
    assert got == pytest.approx((100.0, 150.0), abs=0.5)


def test_position_no_red():
    with pytest.raises(NoMark):
        extract_position(canvas(gray_base(), POSITION))


def test_rectangle_outline():
    img = gray_base(400, 400)
    cv2.rectangle(img, (100, 100), (300, 200), RED, 1)
    mark = extract_area(canvas(img, AREA))
    assert len(mark.polygon) == 4
    for corner in [(100, 100), (300, 100), (300, 200), (100, 200)]:
        assert min(np.hypot(*(np.asarray(p) - corner)) for p in mark.polygon) <= 2
    assert shoelace(mark.polygon) == pytest.approx(20000, rel=0.05)


def test_filled_square_matches_outline():
    out_img, fill_img = gray_base(200, 200), gray_base(200, 200)
    cv2.rectangle(out_img, (50, 60), (99, 109), RED, 1)
    cv2.rectangle(fill_img, (50, 60), (99, 109), RED, -1)
    a = extract_area(canvas(out_img, AREA)).polygon
    b = extract_area(canvas(fill_img, AREA)).polygon
    assert sorted(a) == sorted(b)


def test_area_no_red():
    with pytest.raises(NoMark):
        extract_area(canvas(gray_base(), AREA))


def test_simple_polygon_check():
    assert is_simple_polygon([(0, 0), (10, 0), (10, 10), (0, 10)])
    assert not is_simple_polygon([(0, 0), (10, 10), (10, 0), (0, 10)])


def test_horizontal_bar_route():
    img = gray_base(400, 400)
    cv2.line(img, (100, 200), (300, 200), RED, 8)
    cv2.circle(img, (100, 200), 6, BLUE, -1)
    mark = extract_route(canvas(img, ROUTE))
    assert np.hypot(mark.start[0] - 100, mark.start[1] - 200) <= 2
    us = [p[0] for p in mark.waypoints]
    assert len(us) == 16
    assert all(b > a for a, b in zip(us, us[1:]))
    assert all(abs(p[1] - 200) <= 3 for p in mark.waypoints)


def test_closed_loop_route():
    img = gray_base(400, 400)
    cv2.circle(img, (200, 200), 100, RED, 8)
    cv2.circle(img, (300, 200), 6, BLUE, -1)
    with pytest.raises(LoopedPath):
        extract_route(canvas(img, ROUTE))


def test_route_without_start():
    img = gray_base(400, 400)
    cv2.line(img, (100, 200), (300, 200), RED, 8)
    with pytest.raises(MissingStartMarker):
        extract_route(canvas(img, ROUTE))


def test_mark_dict_round_trip():
    for m in (PositionMark((1.5, 2.0)), AreaMark(((0.0, 0.0), (4.0, 0.0), (4.0, 3.0)), True),
              RouteMark((0.0, 0.0), ((0.0, 0.0), (5.0, 5.0)))):
        assert mark_from_dict(m.to_dict()) == m


def test_alignment_examples():
    base = base_map(512, seed=3)
    img = base.copy()
    img[disc_mask(base.shape, 100, 120, 6)] = RED
    assert verify_canvas_alignment(canvas(img, POSITION, base)) > 0.95
    rot = np.ascontiguousarray(base[::-1, ::-1])
    rot[disc_mask(base.shape, 100, 120, 6)] = RED
    assert verify_canvas_alignment(canvas(rot, POSITION, base)) < 0.7
    noise = np.random.default_rng(0).integers(0, 256, size=base.shape, dtype=np.uint8)
    assert verify_canvas_alignment(canvas(noise, POSITION, base)) < 0.2


def test_canvas_size_mismatch_rejected():
    with pytest.raises(ValueError):
        AnnotatedCanvas(gray_base(10, 10), "e", POSITION, gray_base(12, 12))


# properties -------------------------------------------------------------------

def shifted(img_fn, du, dv, size=320):
    base = gray_base(size, size, seed=5)
    img = base.copy()
    img_fn(img, du, dv)
    return img


@settings(max_examples=25, deadline=None)
@given(st.integers(-40, 40), st.integers(-40, 40))
def test_position_translation_equivariant(du, dv):
    def draw(img, a, b):
        img[disc_mask(img.shape, 150 + a, 160 + b, 7)] = RED

    p0 = extract_position(canvas(shifted(draw, 0, 0), POSITION)).pixel
    p1 = extract_position(canvas(shifted(draw, du, dv), POSITION)).pixel
    assert p1 == pytest.approx((p0[0] + du, p0[1] + dv), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(-40, 40), st.integers(-40, 40))
def test_area_translation_equivariant(du, dv):
    def draw(img, a, b):
        pts = np.array([(100 + a, 90 + b), (220 + a, 110 + b), (180 + a, 230 + b), (90 + a, 200 + b)], np.int32)
        cv2.polylines(img, [pts], True, RED, 3)

    a0 = extract_area(canvas(shifted(draw, 0, 0), AREA)).polygon
    a1 = extract_area(canvas(shifted(draw, du, dv), AREA)).polygon
    assert sorted((x + du, y + dv) for x, y in a0) == sorted(a1)


@settings(max_examples=20, deadline=None)
@given(st.integers(-30, 30), st.integers(-30, 30))
def test_route_translation_equivariant(du, dv):
    def draw(img, a, b):
        pts = np.array([(60 + a, 100 + b), (160 + a, 140 + b), (260 + a, 120 + b)], np.int32)
        cv2.polylines(img, [pts], False, RED, 8)
        cv2.circle(img, (60 + a, 100 + b), 6, BLUE, -1)

    r0 = extract_route(canvas(shifted(draw, 0, 0), ROUTE)).waypoints
    r1 = extract_route(canvas(shifted(draw, du, dv), ROUTE)).waypoints
    for p, q in zip(r0, r1):
        assert abs(q[0] - (p[0] + du)) <= 0.5 and abs(q[1] - (p[1] + dv)) <= 0.5


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 199), st.integers(0, 199)), min_size=3, max_size=6, unique=True))
def test_route_and_area_stay_in_bounds(pts):
    img = gray_base(200, 200, seed=1)
    arr = np.array(pts, np.int32)
    cv2.polylines(img, [arr], False, RED, 8)
    cv2.circle(img, tuple(int(c) for c in arr[0]), 6, BLUE, -1)
    for fn in (extract_route, extract_area, extract_position):
        try:
            mark = fn(canvas(img, ROUTE))
        except Exception:
            continue
        coords = [mark.pixel] if isinstance(mark, PositionMark) else list(
            mark.polygon if isinstance(mark, AreaMark) else mark.waypoints)
        for x, y in coords:
            assert 0 <= x <= 199 and 0 <= y <= 199


def test_route_spacing_uniform():
    img = gray_base(600, 600)
    pts = np.array([(50, 500), (200, 300), (400, 350), (550, 100)], np.int32)
    cv2.polylines(img, [pts], False, RED, 8)
    cv2.circle(img, (50, 500), 6, BLUE, -1)
    wp = np.asarray(extract_route(canvas(img, ROUTE)).waypoints)
    # spacing measured along the true path
    s = np.array([point_to_polyline(p, pts.tolist())[1] for p in wp])
    gaps = np.diff(s)
    assert np.all(np.abs(gaps - gaps.mean()) <= 0.10 * gaps.mean())


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_masks_ignore_grayscale_content(seed):
    a = gray_base(64, 64, seed=0)
    g = np.random.default_rng(seed).integers(0, 256, size=(64, 64), dtype=np.uint8)
    b = np.dstack([g, g, g])
    marks = np.zeros((64, 64), bool)
    marks[10:20, 5:30] = True
    for img in (a, b):
        img[marks] = RED
        img[40:45, 40:45] = BLUE
    for target in ("red", "blue"):
        assert np.array_equal(threshold_mask(a, target), threshold_mask(b, target))


def test_iou_helper_sane():
    sq = [(0, 0), (100, 0), (100, 100), (0, 100)]
    assert polygon_iou(sq, sq, (200, 200)) == 1.0
