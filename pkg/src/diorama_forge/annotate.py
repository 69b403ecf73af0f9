"""Parse painted top-down canvases into pixel-space marks.

The painter draws on a grayscale copy of the base map: one red dot for a
position, one red closed polygon for an area, or an 8 px red path with a blue
start dot for a route. Mark coordinates are in pixel-index space (x right,
y down), so a lone red pixel at column 10, row 20 reads back as (10.0, 20.0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    AmbiguousMark,
    DegenerateArea,
    FragmentedPath,
    LoopedPath,
    MissingStartMarker,
    NoMark,
)

POSITION, AREA, ROUTE = "Position", "Area", "Route"
TEMPLATES = (POSITION, AREA, ROUTE)

HIGH, LOW = 200, 80
TIE_FRACTION = 0.10
CLOSING_RADIUS = 4
SIMPLIFY_TOLERANCE = 2.0
PATH_WIDTH = 8
REACH_RADIUS = 3 * PATH_WIDTH
VISIT_RADIUS = 12
WAYPOINT_COUNT = 16
LOOP_DISTANCE = 16.0
MIN_LOOP_HOLE = 4 * PATH_WIDTH ** 2
MIN_COVERAGE = 0.70
ALIGNMENT_THRESHOLD = 0.7


@dataclass(frozen=True, eq=False)
class AnnotatedCanvas:
    image: np.ndarray
    element_id: str
    template: str
    base_map: np.ndarray | None = None

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}")
        if self.base_map is not None and self.base_map.shape[:2] != self.image.shape[:2]:
            raise ValueError(
                f"canvas {self.image.shape[:2]} and base map {self.base_map.shape[:2]} differ in size"
            )


@dataclass(frozen=True)
class PositionMark:
    pixel: tuple[float, float]

    def to_dict(self) -> dict:
        return {"type": POSITION, "pixel": [float(c) for c in self.pixel]}


@dataclass(frozen=True)
class AreaMark:
    polygon: tuple[tuple[float, float], ...]
    repaired: bool = False

    def to_dict(self) -> dict:
        return {"type": AREA, "polygon": [[float(x), float(y)] for x, y in self.polygon], "repaired": self.repaired}


@dataclass(frozen=True)
class RouteMark:
    start: tuple[float, float]
    waypoints: tuple[tuple[float, float], ...]
    coverage: float = field(default=1.0, compare=False)

    def to_dict(self) -> dict:
        return {
            "type": ROUTE,
            "start": [float(c) for c in self.start],
            "waypoints": [[float(x), float(y)] for x, y in self.waypoints],
        }


def mark_from_dict(d: dict):
    kind = d["type"]
    if kind == POSITION:
        return PositionMark(tuple(d["pixel"]))
    if kind == AREA:
        return AreaMark(tuple(tuple(p) for p in d["polygon"]), bool(d.get("repaired", False)))
    if kind == ROUTE:
        return RouteMark(tuple(d["start"]), tuple(tuple(p) for p in d["waypoints"]))
    raise ValueError(f"unknown mark type {kind!r}")


def threshold_mask(image: np.ndarray, target: str) -> np.ndarray:
    """Boolean mask of strongly red or strongly blue pixels."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] < 3:
        raise ValueError("expected an RGB image")
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    if target == "red":
        return (r >= HIGH) & (g <= LOW) & (b <= LOW)
    if target == "blue":
        return (b >= HIGH) & (r <= LOW) & (g <= LOW)
    raise ValueError(f"unknown target colour {target!r}")


def _components(mask: np.ndarray):
    """Return (sizes, centroids) of 8-connected components, largest first."""
    count, _, stats, centroids = cv2.connectedComponentsWithStats(mask.astype(np.uint8), connectivity=8)
    sizes = stats[1:, cv2.CC_STAT_AREA]
    cents = centroids[1:]
    order = np.lexsort((cents[:, 1], cents[:, 0], -sizes))
    return sizes[order], cents[order]


def extract_position(canvas: AnnotatedCanvas) -> PositionMark:
    mask = threshold_mask(canvas.image, "red")
    if not mask.any():
        raise NoMark(f"{canvas.element_id}: no red pixels on canvas")
    sizes, cents = _components(mask)
    if len(sizes) > 1 and sizes[1] >= (1.0 - TIE_FRACTION) * sizes[0]:
        raise AmbiguousMark(
            f"{canvas.element_id}: {int(sizes[0])} px and {int(sizes[1])} px components tie for largest"
        )
    return PositionMark((float(cents[0][0]), float(cents[0][1])))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    def on_segment(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2, o3, o4 = orient(p1, p2, q1), orient(p1, p2, q2), orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_segment(p1, p2, q1)) or (o2 == 0 and on_segment(p1, p2, q2))
        or (o3 == 0 and on_segment(q1, q2, p1)) or (o4 == 0 and on_segment(q1, q2, p2))
    )


def is_simple_polygon(points) -> bool:
    pts = [tuple(p) for p in points]
    n = len(pts)
    for i in range(n):
        a1, a2 = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            # adjacent edges share a vertex by construction
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if _segments_intersect(a1, a2, pts[j], pts[(j + 1) % n]):
                return False
    return True


def extract_area(canvas: AnnotatedCanvas) -> AreaMark:
    mask = threshold_mask(canvas.image, "red").astype(np.uint8)
    if not mask.any():
        raise NoMark(f"{canvas.element_id}: no red pixels on canvas")
    k = 2 * CLOSING_RADIUS + 1
    kernel = cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (k, k))
    closed = cv2.morphologyEx(mask, cv2.MORPH_CLOSE, kernel)
    contours, _ = cv2.findContours(closed, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    contour = max(contours, key=lambda c: (cv2.contourArea(c), len(c)))
    approx = cv2.approxPolyDP(contour, SIMPLIFY_TOLERANCE, True).reshape(-1, 2).astype(np.float64)
    repaired = False
    if len(approx) >= 3 and not is_simple_polygon(approx):
        approx = cv2.convexHull(approx.astype(np.float32)).reshape(-1, 2).astype(np.float64)
        repaired = True
    if len(approx) < 3 or abs(cv2.contourArea(approx.astype(np.float32))) <= 0:
        raise DegenerateArea(f"{canvas.element_id}: polygon collapsed to {len(approx)} vertices")
    return AreaMark(tuple((float(x), float(y)) for x, y in approx), repaired)


def _mark_capsule(tree: cKDTree, pts: np.ndarray, visited: np.ndarray, a: np.ndarray, b: np.ndarray) -> None:
    seg = b - a
    length = float(np.hypot(*seg))
    mid = (a + b) / 2
    idx = np.asarray(tree.query_ball_point(mid, length / 2 + VISIT_RADIUS), dtype=np.int64)
    if idx.size == 0:
        return
    p = pts[idx]
    if length == 0:
        d = np.hypot(*(p - a).T)
    else:
        t = np.clip(((p - a) @ seg) / (length * length), 0.0, 1.0)
        d = np.hypot(*(p - (a + t[:, None] * seg)).T)
    visited[idx[d <= VISIT_RADIUS]] = True


def _recentre(tree: cKDTree, pts: np.ndarray, point: np.ndarray, iterations: int = 2) -> np.ndarray:
    for _ in range(iterations):
        idx = tree.query_ball_point(point, PATH_WIDTH)
        if not idx:
            break
        point = pts[idx].mean(axis=0)
    return point


def _encloses_hole(mask: np.ndarray) -> bool:
    """True when the stroke surrounds a region larger than a few stroke widths."""
    contours, hierarchy = cv2.findContours(mask.astype(np.uint8), cv2.RETR_CCOMP, cv2.CHAIN_APPROX_SIMPLE)
    if hierarchy is None:
        return False
    for contour, (_, _, _, parent) in zip(contours, hierarchy[0]):
        if parent >= 0 and cv2.contourArea(contour) > MIN_LOOP_HOLE:
            return True
    return False


def resample_polyline(points: np.ndarray, count: int) -> np.ndarray:
    seg = np.hypot(*np.diff(points, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, cum[-1], count)
    x = np.interp(targets, cum, points[:, 0])
    y = np.interp(targets, cum, points[:, 1])
    return np.stack([x, y], axis=1)


def extract_route(canvas: AnnotatedCanvas, waypoint_count: int = WAYPOINT_COUNT) -> RouteMark:
    """Order the red path from the blue start dot and resample it by arc length."""
    img = canvas.image
    blue = threshold_mask(img, "blue")
    if not blue.any():
        raise MissingStartMarker(f"{canvas.element_id}: no blue start marker")
    red = threshold_mask(img, "red")
    if not red.any():
        raise NoMark(f"{canvas.element_id}: no red path")
    _, cents = _components(blue)
    start = np.asarray(cents[0], dtype=np.float64)
    if _encloses_hole(red | blue):
        raise LoopedPath(f"{canvas.element_id}: red path closes on itself")

    ys, xs = np.nonzero(red)
    pts = np.stack([xs, ys], axis=1).astype(np.float64)
    tree = cKDTree(pts)
    visited = np.zeros(len(pts), dtype=bool)

    _, seed = tree.query(start)
    current = pts[seed]
    trail = [current]
    _mark_capsule(tree, pts, visited, current, current)
    while True:
        idx = np.asarray(tree.query_ball_point(current, REACH_RADIUS), dtype=np.int64)
        idx = idx[~visited[idx]]
        if idx.size == 0:
            break
        d2 = np.sum((pts[idx] - current) ** 2, axis=1)
        # farthest first; lowest index breaks ties deterministically
        nxt = pts[idx[np.lexsort((idx, -d2))[0]]]
        _mark_capsule(tree, pts, visited, current, nxt)
        current = nxt
        trail.append(current)

    coverage = float(visited.mean())
    if coverage < MIN_COVERAGE:
        raise FragmentedPath(f"{canvas.element_id}: traversal covered {coverage:.0%} of the red path")

    line = [start] + [_recentre(tree, pts, p) for p in trail]
    poly = [line[0]]
    for p in line[1:]:
        if np.hypot(*(p - poly[-1])) > 1e-9:
            poly.append(p)
    poly = np.asarray(poly)
    if len(poly) < 2:
        raise FragmentedPath(f"{canvas.element_id}: route collapsed to a point")
    waypoints = resample_polyline(poly, waypoint_count)
    h, w = img.shape[:2]
    waypoints[:, 0] = np.clip(waypoints[:, 0], 0.0, w - 1)
    waypoints[:, 1] = np.clip(waypoints[:, 1], 0.0, h - 1)
    if math.hypot(*(waypoints[-1] - waypoints[0])) <= LOOP_DISTANCE:
        raise LoopedPath(f"{canvas.element_id}: path ends within {LOOP_DISTANCE:g} px of its start")
    return RouteMark(
        (float(waypoints[0][0]), float(waypoints[0][1])),
        tuple((float(x), float(y)) for x, y in waypoints),
        coverage,
    )


def extract(canvas: AnnotatedCanvas):
    return {POSITION: extract_position, AREA: extract_area, ROUTE: extract_route}[canvas.template](canvas)


def _gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def verify_canvas_alignment(canvas: AnnotatedCanvas) -> float:
    """Normalized cross-correlation between canvas and base map, marks excluded.

    Negative correlation is reported as 0.
    """
    if canvas.base_map is None:
        raise ValueError("canvas has no base map to compare against")
    marks = threshold_mask(canvas.image, "red") | threshold_mask(canvas.image, "blue")
    # widen by one pixel to drop codec fringes around the strokes
    marks = cv2.dilate(marks.astype(np.uint8), np.ones((3, 3), np.uint8)).astype(bool)
    keep = ~marks
    if not keep.any():
        return 0.0
    a = _gray(canvas.image)[keep]
    b = _gray(canvas.base_map)[keep]
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if denom == 0.0:
        return 1.0 if not a.any() and not b.any() else 0.0
    return float(min(1.0, max(0.0, np.dot(a, b) / denom)))
