"""The five cue-layer composers: objects, humans, particles, lighting, geography."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import glb
from .annotate import AREA, POSITION, ROUTE
from .errors import DegenerateMesh, DegeneratePolygon, MissingAnnotation, MissingAsset
from .geometry import (
    OrthoCameraSpec,
    SplinePath,
    TerrainModel,
    WorldPoint,
    build_spline,
    compute_scale,
    polygon_area,
    polygon_centroid,
    terrain_height,
    winding_number,
)
from .model import (
    HumanCue,
    ObjectCue,
    ParticleEffectConfig,
    SceneDescription,
    normalize_particle_config,
)

logger = logging.getLogger(__name__)

LAYERS = ("geography", "human", "lighting", "object", "particle")
CLIPS = ("walking", "running", "dancing")

DEFAULT_BOB = (5.0, 20.0)
HUMAN_ROUTE_SPEED = 3.0
HUMAN_HEIGHT_M = 1.7
GROUP_DENSITY = 0.02

# keyword -> (variant, speed in m/s); first match wins, so order matters
DEFAULT_VERB_TABLE: dict[str, tuple[str, float | None]] = {
    "static": ("Static", None),
    "float": ("VerticalBob", None),
    "hover": ("VerticalBob", None),
    "driv": ("RouteFollow", 8.0),
    "fly": ("RouteFollow", 15.0),
    "flies": ("RouteFollow", 15.0),
    "sail": ("RouteFollow", 4.0),
    "flow": ("RouteFollow", 2.0),
    "walk": ("RouteFollow", 1.4),
    "run": ("RouteFollow", 4.0),
}
# "flying" in place (helicopters, kites) bobs instead of travelling
STATIONARY_HINTS = ("in place", "stationary", "up and down", "rising", "ascending", "descending", "overhead")

SUN_TABLE = {
    "day": (60.0, 180.0, "high"),
    "sunrise": (10.0, 90.0, "medium"),
    "sunset": (10.0, 270.0, "medium"),
    "overcast_day": (45.0, 180.0, "low"),
    "night": (-30.0, 0.0, "low"),
}

WAVE_TABLE = {"waving": (0.3, 4.0), "flowing": (0.1, 2.0), "static": (0.05, 8.0), "unknown": (0.05, 8.0)}
TEXTURED_GROUND = ("snowfield", "grass", "beach")
WATER_TYPES = ("ocean", "river")
TEXTURED_PARTICLES = ("falling_leaves", "blossoms")


# animation variants ---------------------------------------------------------

@dataclass(frozen=True)
class Static:
    kind = "Static"

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class VerticalBob:
    amplitude: float
    period: float
    kind = "VerticalBob"

    def __post_init__(self):
        if not (self.amplitude > 0 and self.period > 0):
            raise ValueError("amplitude and period must be positive")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "amplitude": float(self.amplitude), "period": float(self.period)}


@dataclass(frozen=True)
class RouteFollow:
    spline: SplinePath
    speed: float
    kind = "RouteFollow"

    def __post_init__(self):
        if not self.speed > 0:
            raise ValueError("speed must be positive")

    @property
    def duration(self) -> float:
        return self.spline.total_length / self.speed

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "speed": float(self.speed),
            "parameterization": "centripetal_catmull_rom",
            "control_points": [p.to_list() for p in self.spline.control_points],
            "length": float(self.spline.total_length),
        }


@dataclass(frozen=True)
class RiggedClip:
    clip: str
    kind = "RiggedClip"

    def __post_init__(self):
        if self.clip not in CLIPS:
            raise ValueError(f"unknown clip {self.clip!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "clip": self.clip}


AnimationSpec = Static | VerticalBob | RouteFollow | RiggedClip


def animation_from_dict(d: Mapping) -> AnimationSpec:
    kind = d["kind"]
    if kind == "Static":
        return Static()
    if kind == "VerticalBob":
        return VerticalBob(float(d["amplitude"]), float(d["period"]))
    if kind == "RouteFollow":
        pts = tuple(WorldPoint.from_list(p) for p in d["control_points"])
        return RouteFollow(build_spline(pts), float(d["speed"]))
    if kind == "RiggedClip":
        return RiggedClip(d["clip"])
    raise ValueError(f"unknown animation kind {kind!r}")


@dataclass(frozen=True)
class PlacedElement:
    element_id: str
    asset: str
    position: WorldPoint
    yaw: float
    scale: float
    animation: AnimationSpec
    layer: str

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"{self.element_id}: scale must be positive")
        if self.layer not in LAYERS:
            raise ValueError(f"unknown layer {self.layer!r}")

    def to_dict(self) -> dict:
        return {
            "element_id": self.element_id,
            "asset": self.asset,
            "position": self.position.to_list(),
            "yaw": float(self.yaw),
            "scale": float(self.scale),
            "animation": self.animation.to_dict(),
            "layer": self.layer,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PlacedElement":
        return cls(
            d["element_id"], d["asset"], WorldPoint.from_list(d["position"]), float(d["yaw"]),
            float(d["scale"]), animation_from_dict(d["animation"]), d["layer"],
        )

    def in_frame(self, cam: OrthoCameraSpec) -> bool:
        pts = [self.position]
        if isinstance(self.animation, RouteFollow):
            pts += list(self.animation.spline.control_points)
        return all(cam.contains_ground(p.east, p.north) for p in pts)


@dataclass(frozen=True)
class ProjectedMark:
    """A mark lifted into world space, tagged with the template it came from."""

    kind: str
    points: tuple[WorldPoint, ...]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "points": [p.to_list() for p in self.points]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProjectedMark":
        return cls(d["kind"], tuple(WorldPoint.from_list(p) for p in d["points"]))


# verb table -----------------------------------------------------------------

def resolve_animation(verb: str, table: Mapping[str, tuple[str, float | None]] | None = None) -> tuple[str, float | None]:
    """Map a free-text animation phrase to ``(variant, speed)``.

    Unrecognized phrases fall back to Static with a logged warning.
    """
    table = DEFAULT_VERB_TABLE if table is None else table
    text = verb.strip().lower()
    for keyword, (variant, speed) in table.items():
        if keyword in text:
            if keyword in ("fly", "flies") and any(h in text for h in STATIONARY_HINTS):
                return "VerticalBob", None
            return variant, speed
    logger.warning("unrecognized animation %r; treating as static", verb)
    return "Static", None


def object_template(cue: ObjectCue, table=None) -> str:
    variant, _ = resolve_animation(cue.animation, table)
    return ROUTE if variant == "RouteFollow" else POSITION


def human_template(cue: HumanCue) -> str:
    """Groups get a spawn area; individuals a route, or a spot if static or dancing."""
    if cue.count_type == "group":
        return AREA
    text = cue.animation.strip().lower()
    if text == "static":
        return POSITION
    if "danc" in text:
        return AREA
    return ROUTE


def _asset_ref(element_id: str) -> str:
    return f"assets/{element_id}.glb"


def place_object(
    element_id: str,
    cue: ObjectCue,
    mark: ProjectedMark | None,
    mesh: bytes | None,
    table=None,
    bob: tuple[float, float] = DEFAULT_BOB,
) -> PlacedElement:
    if mesh is None:
        raise MissingAsset(element_id)
    variant, speed = resolve_animation(cue.animation, table)
    needed = ROUTE if variant == "RouteFollow" else POSITION
    if mark is None or mark.kind != needed:
        raise MissingAnnotation(element_id, f"needs a {needed} mark")
    scale = compute_scale(glb.mesh_bounds(mesh), cue.size)
    if variant == "RouteFollow":
        spline = build_spline(mark.points)
        anim: AnimationSpec = RouteFollow(spline, speed)
        return PlacedElement(element_id, _asset_ref(element_id), mark.points[0], spline.initial_heading(), scale, anim, "object")
    anim = VerticalBob(*bob) if variant == "VerticalBob" else Static()
    return PlacedElement(element_id, _asset_ref(element_id), mark.points[0], 0.0, scale, anim, "object")


def place_objects(
    scene: SceneDescription,
    marks: Mapping[str, ProjectedMark],
    assets: Mapping[str, bytes],
    table=None,
) -> list[PlacedElement]:
    return [
        place_object(eid, cue, marks.get(eid), assets.get(eid), table)
        for eid, cue in sorted(scene.objects.items())
    ]


def route_humans(element_id: str, human: HumanCue, mark: ProjectedMark | None, mesh: bytes | None) -> PlacedElement:
    """Move a generated, unrigged human mesh along its route at walking pace."""
    if mark is None or mark.kind != ROUTE:
        raise MissingAnnotation(element_id, "needs a Route mark")
    if mesh is None:
        raise MissingAsset(element_id)
    spline = build_spline(mark.points)
    lo, hi = glb.mesh_bounds(mesh)
    height = hi[1] - lo[1]
    if height <= 0:
        raise DegenerateMesh(f"{element_id}: mesh has no vertical extent")
    return PlacedElement(
        element_id, _asset_ref(element_id), mark.points[0], spline.initial_heading(),
        HUMAN_HEIGHT_M / height, RouteFollow(spline, HUMAN_ROUTE_SPEED), "human",
    )


def place_static_human(element_id: str, mark: ProjectedMark | None, mesh: bytes | None) -> PlacedElement:
    if mark is None or mark.kind != POSITION:
        raise MissingAnnotation(element_id, "needs a Position mark")
    if mesh is None:
        raise MissingAsset(element_id)
    lo, hi = glb.mesh_bounds(mesh)
    height = hi[1] - lo[1]
    if height <= 0:
        raise DegenerateMesh(f"{element_id}: mesh has no vertical extent")
    return PlacedElement(element_id, _asset_ref(element_id), mark.points[0], 0.0, HUMAN_HEIGHT_M / height, Static(), "human")


# pedestrians ----------------------------------------------------------------

@dataclass(frozen=True)
class StockFigure:
    id: str
    file: str
    clips: tuple[str, ...]
    nominal_height: float


@dataclass(frozen=True)
class StockCatalog:
    root: Path
    figures: tuple[StockFigure, ...]

    @classmethod
    def load(cls, root: str | Path | None = None) -> "StockCatalog":
        if root is None:
            from importlib import resources
            root = Path(str(resources.files(__package__).joinpath("stock")))
        root = Path(root)
        doc = json.loads((root / "catalog.json").read_text(encoding="utf-8"))
        figures = tuple(
            StockFigure(f["id"], f["file"], tuple(f["clips"]), float(f["nominal_height"]))
            for f in sorted(doc["figures"], key=lambda f: f["id"])
        )
        if not figures:
            raise ValueError("stock catalog is empty")
        return cls(root, figures)

    def asset_ref(self, figure: StockFigure) -> str:
        return f"assets/{figure.file}"

    def file_bytes(self, figure: StockFigure) -> bytes:
        return (self.root / figure.file).read_bytes()


@dataclass(frozen=True)
class PedestrianField:
    element_id: str
    polygon: tuple[WorldPoint, ...]
    density: float
    seed: int
    clip_weights: Mapping[str, float] = field(default_factory=lambda: {"walking": 1.0})
    individual: bool = False

    def __post_init__(self):
        if self.density < 0:
            raise ValueError("density must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")

    @property
    def area(self) -> float:
        return abs(polygon_area([(p.east, p.north) for p in self.polygon]))


def stream_for(seed: int, element_id: str) -> np.random.Generator:
    """Counter-based (Philox) stream keyed by ``(seed, element_id)``."""
    key = int.from_bytes(hashlib.sha256(f"{seed}:{element_id}".encode("utf-8")).digest()[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def _weighted_choice(rng: np.random.Generator, items: Sequence[str], weights: Sequence[float]) -> str:
    total = math.fsum(weights)
    x = rng.random() * total
    acc = 0.0
    for item, w in zip(items, weights):
        acc += w
        if x < acc:
            return item
    return items[-1]


def clip_weights_for(animation: str) -> dict[str, float]:
    text = animation.lower()
    for clip, key in (("walking", "walk"), ("running", "run"), ("dancing", "danc")):
        if key in text:
            return {clip: 1.0}
    return {c: 1.0 for c in CLIPS}


def spawn_pedestrians(
    pfield: PedestrianField, stock: StockCatalog, terrain: TerrainModel | None = None, max_tries: int = 10_000
) -> list[PlacedElement]:
    """Scatter rigged stock figures inside a world polygon.

    Count is ``round(density * area)`` (one at the centroid for an individual).
    Every draw comes from the same seeded stream in a fixed order, so equal
    inputs give equal outputs.
    """
    poly2d = [(p.east, p.north) for p in pfield.polygon]
    if len(poly2d) < 3 or pfield.area <= 0:
        raise DegeneratePolygon(f"{pfield.element_id}: spawn polygon has no area")
    count = 1 if pfield.individual else int(math.floor(pfield.density * pfield.area + 0.5))
    if count == 0:
        return []
    rng = stream_for(pfield.seed, pfield.element_id)
    xs = [x for x, _ in poly2d]
    ys = [y for _, y in poly2d]
    xmin, xmax, ymin, ymax = min(xs), max(xs), min(ys), max(ys)
    clips = sorted(c for c, w in pfield.clip_weights.items() if w > 0)
    weights = [pfield.clip_weights[c] for c in clips]
    mean_up = float(np.mean([p.up for p in pfield.polygon]))

    out = []
    for i in range(count):
        if pfield.individual:
            x, y = polygon_centroid(poly2d)
        else:
            for _ in range(max_tries):
                x = xmin + rng.random() * (xmax - xmin)
                y = ymin + rng.random() * (ymax - ymin)
                if winding_number((x, y), poly2d) != 0:
                    break
            else:
                raise DegeneratePolygon(f"{pfield.element_id}: rejection sampling did not converge")
        clip = _weighted_choice(rng, clips, weights)
        figures = [f for f in stock.figures if clip in f.clips] or list(stock.figures)
        figure = figures[int(rng.random() * len(figures)) % len(figures)]
        yaw = rng.random() * 360.0
        up = terrain_height(terrain, x, y) if terrain is not None else mean_up
        eid = pfield.element_id if pfield.individual else f"{pfield.element_id}_{i:03d}"
        out.append(PlacedElement(eid, stock.asset_ref(figure), WorldPoint(x, y, up), yaw, 1.0, RiggedClip(clip), "human"))
    return out


# particles ------------------------------------------------------------------

_RANK = {"low": 0, "medium": 1, "high": 2}


def configure_particles(scene: SceneDescription) -> list[ParticleEffectConfig]:
    """Fold weather and particle cues into the five built-in effects."""
    weather = scene.event_summary.weather
    sources: dict[str, list[str]] = {e: [] for e in ("rain", "snow", "fog", "cloud", "blossom")}
    if weather == "rainy":
        sources["rain"].append("low")
    if weather == "snowy":
        sources["snow"].append("low")
    if weather == "foggy":
        sources["fog"].append("low")
    if weather == "cloudy" or scene.event_summary.time_of_day == "overcast_day":
        sources["cloud"].append("low")
    cue_effect = {"rain": "rain", "snow": "snow", "fog": "fog", "mist": "fog", "cloud": "cloud", "blossoms": "blossom"}
    for _, cue in sorted(scene.particles.items()):
        effect = cue_effect.get(cue.type)
        if effect:
            sources[effect].append("low" if cue.intensity == "unknown" else cue.intensity)
    doc = {"effects": {}}
    for effect, levels in sources.items():
        if levels:
            doc["effects"][effect] = {"enabled": True, "intensity": max(levels, key=_RANK.__getitem__)}
        else:
            doc["effects"][effect] = {"enabled": False, "intensity": "low"}
    return normalize_particle_config(doc)


def textured_particles(scene: SceneDescription) -> list[str]:
    """Particle cue ids whose look comes from a generated texture."""
    return [eid for eid, cue in sorted(scene.particles.items()) if cue.type in TEXTURED_PARTICLES]


# lighting -------------------------------------------------------------------

@dataclass(frozen=True)
class Sun:
    elevation: float
    azimuth: float
    intensity: str

    def __post_init__(self):
        if not -90.0 <= self.elevation <= 90.0:
            raise ValueError("sun elevation outside [-90, 90]")
        if not 0.0 <= self.azimuth < 360.0:
            raise ValueError("sun azimuth outside [0, 360)")


@dataclass(frozen=True)
class LightingRig:
    sun: Sun
    streetlights: tuple[WorldPoint, ...] = ()
    emissive_elements: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "sun": {"elevation": self.sun.elevation, "azimuth": self.sun.azimuth, "intensity": self.sun.intensity},
            "streetlights": [p.to_list() for p in self.streetlights],
            "emissive_elements": list(self.emissive_elements),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LightingRig":
        s = d["sun"]
        return cls(
            Sun(float(s["elevation"]), float(s["azimuth"]), s["intensity"]),
            tuple(WorldPoint.from_list(p) for p in d["streetlights"]),
            tuple(d["emissive_elements"]),
        )


def _mentions(text: str, needle: str) -> bool:
    needle = needle.strip().lower()
    return bool(needle) and re.search(r"\b" + re.escape(needle) + r"\b", text.lower()) is not None


def configure_lighting(
    scene: SceneDescription, streetlight_marks: Sequence[WorldPoint], sun_table: Mapping | None = None
) -> LightingRig:
    table = SUN_TABLE if sun_table is None else sun_table
    tod = scene.event_summary.time_of_day
    elevation, azimuth, intensity = table.get(tod, table["day"])
    has_streetlight_cue = any(c.type == "streetlight" for c in scene.lighting.values())
    lights = tuple(streetlight_marks) if (tod in ("night", "sunset") or has_streetlight_cue) else ()
    emissive = set()
    for cue in scene.lighting.values():
        if cue.type != "decorative_light":
            continue
        text = f"{cue.description} {cue.direction_or_area}"
        for oid, obj in scene.objects.items():
            if _mentions(text, oid) or _mentions(text, obj.label):
                emissive.add(oid)
    return LightingRig(Sun(float(elevation), float(azimuth), intensity), lights, tuple(sorted(emissive)))


# geography ------------------------------------------------------------------

@dataclass(frozen=True)
class WaterRegion:
    element_id: str
    polygon: tuple[WorldPoint, ...]
    wave_amplitude: float
    wave_period: float

    def __post_init__(self):
        if not (self.wave_amplitude > 0 and self.wave_period > 0):
            raise ValueError("wave parameters must be positive")

    def to_dict(self) -> dict:
        return {
            "element_id": self.element_id,
            "polygon": [p.to_list() for p in self.polygon],
            "wave_amplitude": float(self.wave_amplitude),
            "wave_period": float(self.wave_period),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "WaterRegion":
        return cls(
            d["element_id"], tuple(WorldPoint.from_list(p) for p in d["polygon"]),
            float(d["wave_amplitude"]), float(d["wave_period"]),
        )


@dataclass(frozen=True)
class GeoSurface:
    terrain_texture: str | None = None
    water_regions: tuple[WaterRegion, ...] = ()

    def to_dict(self) -> dict:
        return {"terrain_texture": self.terrain_texture, "water_regions": [w.to_dict() for w in self.water_regions]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GeoSurface":
        return cls(d.get("terrain_texture"), tuple(WaterRegion.from_dict(w) for w in d.get("water_regions", [])))


def compose_geography(
    scene: SceneDescription,
    area_marks: Mapping[str, Sequence[WorldPoint]],
    textures: Mapping[str, str],
) -> GeoSurface:
    texture = None
    water = []
    for eid, cue in sorted(scene.geography.items()):
        if texture is None and cue.type in TEXTURED_GROUND and eid in textures:
            texture = textures[eid]
        if cue.type in WATER_TYPES:
            polygon = area_marks.get(eid)
            if not polygon:
                raise MissingAnnotation(eid, "water region needs an Area mark")
            amplitude, period = WAVE_TABLE[cue.dynamic_state]
            water.append(WaterRegion(eid, tuple(polygon), amplitude, period))
    return GeoSurface(texture, tuple(water))
