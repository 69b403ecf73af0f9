"""Pixel/world mapping, terrain queries, splines and asset scaling.

World coordinates are a local east-north-up frame in meters, anchored at the
aggregated event location. The top-down camera is orthographic and north-up:
image ``u`` grows eastward and image ``v`` grows southward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import canonical
from .errors import DegenerateMesh, OutOfFrame, TooFewPoints

NOMINAL_HEIGHT_M = {"small": 0.5, "medium": 2.0, "large": 8.0, "unknown": 2.0}
SPLINE_ALPHA = 0.5
LENGTH_SEGMENTS = 256


@dataclass(frozen=True)
class OrthoCameraSpec:
    center_east: float = 0.0
    center_north: float = 0.0
    extent_east: float = 200.0
    extent_north: float = 200.0
    image_width: int = 2048
    image_height: int = 2048

    def __post_init__(self):
        if not (self.extent_east > 0 and self.extent_north > 0):
            raise ValueError("camera extents must be positive")
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image dimensions must be >= 1")

    @property
    def meters_per_pixel(self) -> tuple[float, float]:
        return self.extent_east / self.image_width, self.extent_north / self.image_height

    def contains_ground(self, east: float, north: float) -> bool:
        half_e, half_n = self.extent_east / 2, self.extent_north / 2
        return (
            abs(east - self.center_east) <= half_e + 1e-9
            and abs(north - self.center_north) <= half_n + 1e-9
        )

    def to_dict(self) -> dict:
        return {
            "center_east": float(self.center_east),
            "center_north": float(self.center_north),
            "extent_east": float(self.extent_east),
            "extent_north": float(self.extent_north),
            "image_width": int(self.image_width),
            "image_height": int(self.image_height),
            "orientation": "north_up",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrthoCameraSpec":
        return cls(
            float(d["center_east"]), float(d["center_north"]), float(d["extent_east"]),
            float(d["extent_north"]), int(d["image_width"]), int(d["image_height"]),
        )


def pixel_to_ground(u: float, v: float, cam: OrthoCameraSpec) -> tuple[float, float]:
    if not (0.0 <= u <= cam.image_width and 0.0 <= v <= cam.image_height):
        raise OutOfFrame(f"pixel ({u}, {v}) outside {cam.image_width}x{cam.image_height} frame")
    east = cam.center_east + (u / cam.image_width - 0.5) * cam.extent_east
    north = cam.center_north + (0.5 - v / cam.image_height) * cam.extent_north
    return east, north


def ground_to_pixel(east: float, north: float, cam: OrthoCameraSpec) -> tuple[float, float]:
    """Exact algebraic inverse of :func:`pixel_to_ground` (no frame check)."""
    u = ((east - cam.center_east) / cam.extent_east + 0.5) * cam.image_width
    v = (0.5 - (north - cam.center_north) / cam.extent_north) * cam.image_height
    return u, v


@dataclass(frozen=True, eq=False)
class TerrainModel:
    """Regular heightfield; ``heights[row, col]`` sits at
    ``(origin_east + col * cell_size, origin_north + row * cell_size)``."""

    heights: np.ndarray
    origin_east: float = 0.0
    origin_north: float = 0.0
    cell_size: float = 1.0

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] < 2 or h.shape[1] < 2:
            raise ValueError("heightfield must be at least 2x2")
        if not self.cell_size > 0:
            raise ValueError("cell size must be positive")
        if not np.all(np.isfinite(h)):
            raise ValueError("heights must be finite")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)

    def __eq__(self, other):
        if not isinstance(other, TerrainModel):
            return NotImplemented
        return (
            self.origin_east == other.origin_east
            and self.origin_north == other.origin_north
            and self.cell_size == other.cell_size
            and self.heights.shape == other.heights.shape
            and bool(np.array_equal(self.heights, other.heights))
        )

    @property
    def rows(self) -> int:
        return self.heights.shape[0]

    @property
    def cols(self) -> int:
        return self.heights.shape[1]

    @classmethod
    def flat(cls, height: float = 0.0, half_extent: float = 1000.0) -> "TerrainModel":
        return cls(np.full((2, 2), float(height)), -half_extent, -half_extent, 2 * half_extent)

    def heights_at(self, east, north) -> np.ndarray:
        """Vectorized bilinear query; points off the grid clamp to the edge."""
        fx = (np.asarray(east, dtype=np.float64) - self.origin_east) / self.cell_size
        fy = (np.asarray(north, dtype=np.float64) - self.origin_north) / self.cell_size
        fx = np.clip(fx, 0.0, self.cols - 1)
        fy = np.clip(fy, 0.0, self.rows - 1)
        i = np.minimum(np.floor(fx).astype(np.int64), self.cols - 2)
        j = np.minimum(np.floor(fy).astype(np.int64), self.rows - 2)
        tx = fx - i
        ty = fy - j
        h = self.heights
        h00 = h[j, i]
        h10 = h[j, i + 1]
        h01 = h[j + 1, i]
        h11 = h[j + 1, i + 1]
        return (h00 * (1 - tx) + h10 * tx) * (1 - ty) + (h01 * (1 - tx) + h11 * tx) * ty

    def to_dict(self) -> dict:
        return {
            "origin_east": float(self.origin_east),
            "origin_north": float(self.origin_north),
            "cell_size": float(self.cell_size),
            "rows": self.rows,
            "cols": self.cols,
            "heights": [float(x) for x in self.heights.ravel()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TerrainModel":
        rows, cols = int(d["rows"]), int(d["cols"])
        heights = np.asarray(d["heights"], dtype=np.float64)
        if heights.size != rows * cols:
            raise ValueError(f"expected {rows * cols} heights, found {heights.size}")
        return cls(heights.reshape(rows, cols), float(d["origin_east"]), float(d["origin_north"]), float(d["cell_size"]))

    @classmethod
    def load(cls, path: str | Path) -> "TerrainModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def dump_bytes(self) -> bytes:
        return canonical.dump_bytes(self.to_dict())


def terrain_height(terrain: TerrainModel, east: float, north: float) -> float:
    return float(terrain.heights_at(east, north))


@dataclass(frozen=True)
class WorldPoint:
    east: float
    north: float
    up: float

    def __post_init__(self):
        for name in ("east", "north", "up"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.east, self.north, self.up])

    def to_list(self) -> list[float]:
        return [self.east, self.north, self.up]

    @classmethod
    def from_list(cls, values) -> "WorldPoint":
        e, n, u = values
        return cls(e, n, u)


def _lerp(pa, pb, ta, tb, t):
    if tb == ta:
        # zero-length knot interval only occurs between duplicated points
        return pa
    return pa * ((tb - t) / (tb - ta)) + pb * ((t - ta) / (tb - ta))


def _segment_point(p0, p1, p2, p3, s: float) -> np.ndarray:
    """Barry-Goldman evaluation of one centripetal Catmull-Rom segment at local s in [0, 1]."""
    t0 = 0.0
    t1 = t0 + float(np.linalg.norm(p1 - p0)) ** SPLINE_ALPHA
    t2 = t1 + float(np.linalg.norm(p2 - p1)) ** SPLINE_ALPHA
    t3 = t2 + float(np.linalg.norm(p3 - p2)) ** SPLINE_ALPHA
    if t2 == t1:
        return p1.copy()
    t = t1 + s * (t2 - t1)
    a1 = _lerp(p0, p1, t0, t1, t)
    a2 = _lerp(p1, p2, t1, t2, t)
    a3 = _lerp(p2, p3, t2, t3, t)
    b1 = _lerp(a1, a2, t0, t2, t)
    b2 = _lerp(a2, a3, t1, t3, t)
    return _lerp(b1, b2, t1, t2, t)


@dataclass(frozen=True)
class SplinePath:
    """Centripetal Catmull-Rom curve through every control point.

    The first and last control points are duplicated as phantom neighbours.
    ``sample(t)`` maps ``t`` in [0, 1] uniformly over the segments.
    """

    control_points: tuple[WorldPoint, ...]
    total_length: float = field(init=False)

    def __post_init__(self):
        pts = tuple(self.control_points)
        if len(pts) < 2:
            raise TooFewPoints(f"a spline needs at least 2 points, got {len(pts)}")
        object.__setattr__(self, "control_points", pts)
        samples = self.sample_many(LENGTH_SEGMENTS + 1)
        length = float(np.sum(np.linalg.norm(np.diff(samples, axis=0), axis=1)))
        object.__setattr__(self, "total_length", length)

    @property
    def segment_count(self) -> int:
        return len(self.control_points) - 1

    def _padded(self) -> list[np.ndarray]:
        pts = [p.as_array() for p in self.control_points]
        return [pts[0], *pts, pts[-1]]

    def sample(self, t: float) -> np.ndarray:
        t = min(max(float(t), 0.0), 1.0)
        padded = self._padded()
        n = self.segment_count
        x = t * n
        i = min(int(math.floor(x)), n - 1)
        s = x - i
        return _segment_point(padded[i], padded[i + 1], padded[i + 2], padded[i + 3], s)

    def sample_many(self, count: int) -> np.ndarray:
        return np.array([self.sample(t) for t in np.linspace(0.0, 1.0, count)])

    def initial_heading(self) -> float:
        """Compass heading (degrees clockwise from north) of the start tangent."""
        p0 = self.sample(0.0)
        for dt in (1e-3, 1e-2, 1e-1, 1.0):
            d = self.sample(dt) - p0
            if math.hypot(d[0], d[1]) > 1e-12:
                return math.degrees(math.atan2(d[0], d[1])) % 360.0
        return 0.0


def build_spline(waypoints: Sequence[WorldPoint]) -> SplinePath:
    if len(waypoints) < 2:
        raise TooFewPoints(f"a spline needs at least 2 points, got {len(waypoints)}")
    return SplinePath(tuple(waypoints))


def compute_scale(mesh_bounds, size: str) -> float:
    """Uniform scale that brings the mesh's vertical (glTF +Y) extent to the nominal height for ``size``."""
    lo, hi = (np.asarray(b, dtype=np.float64) for b in mesh_bounds)
    extents = hi - lo
    if extents.shape != (3,) or not np.all(np.isfinite(extents)) or extents[1] <= 0:
        raise DegenerateMesh(f"mesh extents {extents.tolist()} have no vertical size")
    if size not in NOMINAL_HEIGHT_M:
        raise ValueError(f"unknown size category {size!r}")
    return NOMINAL_HEIGHT_M[size] / float(extents[1])


def polygon_area(points) -> float:
    """Signed shoelace area of a closed 2D polygon."""
    pts = np.asarray(points, dtype=np.float64)[:, :2]
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(points) -> tuple[float, float]:
    pts = np.asarray(points, dtype=np.float64)[:, :2]
    a = polygon_area(pts)
    if a == 0:
        return float(pts[:, 0].mean()), float(pts[:, 1].mean())
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    return float(np.sum((x + xn) * cross) / (6 * a)), float(np.sum((y + yn) * cross) / (6 * a))


def winding_number(point, polygon) -> int:
    px, py = point[0], point[1]
    pts = np.asarray(polygon, dtype=np.float64)[:, :2]
    wn = 0
    for (x0, y0), (x1, y1) in zip(pts, np.roll(pts, -1, axis=0)):
        is_left = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)
        if y0 <= py:
            if y1 > py and is_left > 0:
                wn += 1
        elif y1 <= py and is_left < 0:
            wn -= 1
    return wn


def project_annotation(mark, cam: OrthoCameraSpec, terrain: TerrainModel):
    """Lift a pixel-space mark onto the terrain.

    Position marks give one :class:`WorldPoint`; area and route marks give a
    list in vertex or waypoint order.
    """
    from .annotate import AreaMark, PositionMark, RouteMark

    def lift(uv) -> WorldPoint:
        east, north = pixel_to_ground(float(uv[0]), float(uv[1]), cam)
        return WorldPoint(east, north, terrain_height(terrain, east, north))

    if isinstance(mark, PositionMark):
        return lift(mark.pixel)
    if isinstance(mark, AreaMark):
        return [lift(p) for p in mark.polygon]
    if isinstance(mark, RouteMark):
        return [lift(p) for p in mark.waypoints]
    raise TypeError(f"cannot project {type(mark).__name__}")


def render_base_map(terrain: TerrainModel, cam: OrthoCameraSpec) -> np.ndarray:
    """Grayscale hillshade of the terrain as seen by the top-down camera.

    Returns an ``(H, W, 3)`` uint8 array with R = G = B everywhere.
    """
    u = np.arange(cam.image_width) + 0.5
    v = np.arange(cam.image_height) + 0.5
    east = cam.center_east + (u / cam.image_width - 0.5) * cam.extent_east
    north = cam.center_north + (0.5 - v / cam.image_height) * cam.extent_north
    ee, nn = np.meshgrid(east, north)
    h = terrain.heights_at(ee, nn)
    de, dn = cam.meters_per_pixel
    # image rows run southward, so the northward gradient flips sign
    dz_dn, dz_de = np.gradient(h, -dn, de)
    azimuth, elevation = math.radians(315.0), math.radians(45.0)
    slope = np.arctan(np.hypot(dz_de, dz_dn))
    aspect = np.arctan2(-dz_de, -dz_dn)
    shade = np.sin(elevation) * np.cos(slope) + np.cos(elevation) * np.sin(slope) * np.cos(azimuth - aspect)
    span = float(h.max() - h.min())
    tone = (h - h.min()) / span if span > 0 else np.zeros_like(h)
    gray = np.clip(255.0 * (0.55 * np.clip(shade, 0, 1) + 0.45 * tone), 0, 255)
    gray = np.round(gray).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)
