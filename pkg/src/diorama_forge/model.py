"""Scene description types and their closed-schema validation."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from . import canonical
from .errors import SchemaViolation

ENVIRONMENTS = ("indoor", "outdoor", "mixed", "unknown")
TIMES_OF_DAY = ("day", "night", "sunset", "sunrise", "overcast_day", "unknown")
WEATHERS = ("clear", "cloudy", "rainy", "snowy", "foggy", "windy", "mixed", "unknown")
SIZES = ("small", "medium", "large", "unknown")
COUNT_TYPES = ("individual", "group")
GEO_TYPES = (
    "road", "beach", "river", "ocean", "mountain", "snowfield", "grass",
    "urban_block", "park", "bridge", "station", "other",
)
DYNAMIC_STATES = ("static", "flowing", "waving", "unknown")
LIGHT_TYPES = (
    "sunlight", "sunset", "streetlight", "decorative_light", "indoor_light",
    "overcast_light", "unknown",
)
INTENSITIES = ("low", "medium", "high", "unknown")
PARTICLE_TYPES = (
    "rain", "snow", "fog", "cloud", "mist", "falling_leaves", "blossoms", "none", "unknown",
)
EFFECTS = ("rain", "snow", "fog", "cloud", "blossom")
EFFECT_INTENSITIES = ("low", "medium", "high")

LAYER_KEYS = ("objects", "humans", "geography", "lighting", "particles")


@dataclass(frozen=True)
class GeoLocation:
    latitude: float
    longitude: float
    altitude: float = 0.0

    def __post_init__(self):
        for name in ("latitude", "longitude", "altitude"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")

    def to_dict(self) -> dict:
        return {"latitude": self.latitude, "longitude": self.longitude, "altitude": self.altitude}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GeoLocation":
        return cls(d["latitude"], d["longitude"], d.get("altitude", 0.0))


@dataclass(frozen=True)
class EventSummary:
    scene_type: str
    location_context: str
    environment: str
    time_of_day: str
    weather: str
    overall_description: str


@dataclass(frozen=True)
class ObjectCue:
    images: tuple[str, ...]
    label: str
    description: str
    animation: str
    size: str
    confidence: float


@dataclass(frozen=True)
class HumanCue:
    images: tuple[str, ...]
    count_type: str
    description: str
    animation: str
    pose_or_activity: str
    confidence: float


@dataclass(frozen=True)
class GeoCue:
    images: tuple[str, ...]
    type: str
    description: str
    dynamic_state: str
    confidence: float


@dataclass(frozen=True)
class LightCue:
    images: tuple[str, ...]
    type: str
    description: str
    intensity: str
    direction_or_area: str
    confidence: float


@dataclass(frozen=True)
class ParticleCue:
    images: tuple[str, ...]
    type: str
    description: str
    intensity: str
    confidence: float


@dataclass(frozen=True)
class SceneDescription:
    event_summary: EventSummary
    objects: dict[str, ObjectCue] = field(default_factory=dict)
    humans: dict[str, HumanCue] = field(default_factory=dict)
    geography: dict[str, GeoCue] = field(default_factory=dict)
    lighting: dict[str, LightCue] = field(default_factory=dict)
    particles: dict[str, ParticleCue] = field(default_factory=dict)

    @property
    def element_count(self) -> int:
        return sum(len(getattr(self, k)) for k in LAYER_KEYS)

    def to_dict(self) -> dict:
        def cue(c) -> dict:
            d = dict(c.__dict__)
            d["images"] = list(c.images)
            return d

        out: dict[str, Any] = {"event_summary": dict(self.event_summary.__dict__)}
        for key in LAYER_KEYS:
            out[key] = {eid: cue(c) for eid, c in getattr(self, key).items()}
        return out

    def to_json(self) -> str:
        return canonical.dumps(self.to_dict())


# field name -> allowed enum values, or a type tag
_TEXT = "text"
_CONF = "confidence"
_IMAGES = "images"

_SUMMARY_FIELDS = {
    "scene_type": _TEXT,
    "location_context": _TEXT,
    "environment": ENVIRONMENTS,
    "time_of_day": TIMES_OF_DAY,
    "weather": WEATHERS,
    "overall_description": _TEXT,
}

_LAYER_FIELDS = {
    "objects": (ObjectCue, {
        "images": _IMAGES, "label": _TEXT, "description": _TEXT, "animation": _TEXT,
        "size": SIZES, "confidence": _CONF,
    }),
    "humans": (HumanCue, {
        "images": _IMAGES, "count_type": COUNT_TYPES, "description": _TEXT,
        "animation": _TEXT, "pose_or_activity": _TEXT, "confidence": _CONF,
    }),
    "geography": (GeoCue, {
        "images": _IMAGES, "type": GEO_TYPES, "description": _TEXT,
        "dynamic_state": DYNAMIC_STATES, "confidence": _CONF,
    }),
    "lighting": (LightCue, {
        "images": _IMAGES, "type": LIGHT_TYPES, "description": _TEXT,
        "intensity": INTENSITIES, "direction_or_area": _TEXT, "confidence": _CONF,
    }),
    "particles": (ParticleCue, {
        "images": _IMAGES, "type": PARTICLE_TYPES, "description": _TEXT,
        "intensity": INTENSITIES, "confidence": _CONF,
    }),
}


class _Collector:
    def __init__(self):
        self.errors: list[tuple[str, str]] = []

    def add(self, path: str, reason: str) -> None:
        self.errors.append((path, reason))


def _check_fields(obj: Any, spec: Mapping[str, Any], path: str, photo_ids, errs: _Collector) -> dict | None:
    if not isinstance(obj, dict):
        errs.add(path, "expected an object")
        return None
    for key in sorted(set(obj) - set(spec)):
        errs.add(f"{path}.{key}", "unknown key")
    values = {}
    ok = True
    for name, kind in spec.items():
        fpath = f"{path}.{name}"
        if name not in obj:
            errs.add(fpath, "missing key")
            ok = False
            continue
        value = obj[name]
        if kind == _TEXT:
            if not isinstance(value, str):
                errs.add(fpath, "expected a string")
                ok = False
            values[name] = value
        elif kind == _CONF:
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                errs.add(fpath, "expected a number")
                ok = False
            elif not 0.0 <= value <= 1.0:
                errs.add(fpath, f"confidence {value} outside [0, 1]")
                ok = False
            else:
                values[name] = float(value)
        elif kind == _IMAGES:
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                errs.add(fpath, "expected a list of photo ids")
                ok = False
                continue
            if path.startswith("objects.") and not value:
                errs.add(fpath, "must reference at least one photo")
                ok = False
            if photo_ids is not None:
                for i, pid in enumerate(value):
                    if pid not in photo_ids:
                        errs.add(f"{fpath}[{i}]", f"unknown photo id {pid!r}")
                        ok = False
            values[name] = tuple(value)
        else:
            if not isinstance(value, str) or value not in kind:
                errs.add(fpath, f"{value!r} not one of {' | '.join(kind)}")
                ok = False
            values[name] = value
    return values if ok else None


def validate_scene_description(raw: Any, photo_ids: Iterable[str] | None = None) -> SceneDescription:
    """Validate a scene-analysis document against the closed five-layer schema.

    ``raw`` may be a parsed document or JSON text. All problems are collected
    before raising, so the returned :class:`SchemaViolation` lists every
    offending field path.
    """
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaViolation("$", f"invalid JSON: {exc.msg}") from exc
    ids = set(photo_ids) if photo_ids is not None else None
    errs = _Collector()
    if not isinstance(raw, dict):
        raise SchemaViolation("$", "expected a JSON object")

    expected = ("event_summary",) + LAYER_KEYS
    for key in sorted(set(raw) - set(expected)):
        errs.add(key, "unknown key")
    for key in expected:
        if key not in raw:
            errs.add(key, "missing key")

    summary = None
    if "event_summary" in raw:
        fields = _check_fields(raw["event_summary"], _SUMMARY_FIELDS, "event_summary", ids, errs)
        if fields is not None:
            summary = EventSummary(**fields)

    layers: dict[str, dict] = {}
    for key in LAYER_KEYS:
        if key not in raw:
            continue
        block = raw[key]
        if not isinstance(block, dict):
            errs.add(key, "expected an object")
            continue
        cls, spec = _LAYER_FIELDS[key]
        layer = {}
        for eid in sorted(block):
            fields = _check_fields(block[eid], spec, f"{key}.{eid}", ids, errs)
            if fields is not None:
                layer[eid] = cls(**fields)
        layers[key] = layer

    if errs.errors:
        path, reason = errs.errors[0]
        raise SchemaViolation(path, reason, errs.errors)
    return SceneDescription(event_summary=summary, **layers)


@dataclass(frozen=True)
class ParticleEffectConfig:
    effect: str
    enabled: bool
    intensity: str

    def __post_init__(self):
        if self.effect not in EFFECTS:
            raise ValueError(f"unknown effect {self.effect!r}")
        if self.intensity not in EFFECT_INTENSITIES:
            raise ValueError(f"unknown intensity {self.intensity!r}")
        if not self.enabled and self.intensity != "low":
            raise ValueError("a disabled effect must have intensity 'low'")

    def to_dict(self) -> dict:
        return {"effect": self.effect, "enabled": self.enabled, "intensity": self.intensity}


class ParticleRuleWarning(UserWarning):
    """A disabled effect arrived with a non-low intensity and was coerced."""


def normalize_particle_config(raw: Any) -> list[ParticleEffectConfig]:
    """Turn an effects-classifier document into exactly five effect configs.

    A disabled effect carrying a non-low intensity is repaired to ``low`` and a
    :class:`ParticleRuleWarning` is emitted for it.
    """
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaViolation("$", f"invalid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("effects"), dict):
        raise SchemaViolation("effects", "missing effects object")
    effects = raw["effects"]
    out = []
    for name in EFFECTS:
        path = f"effects.{name}"
        entry = effects.get(name)
        if not isinstance(entry, dict):
            raise SchemaViolation(path, "missing effect")
        enabled = entry.get("enabled")
        intensity = entry.get("intensity")
        if not isinstance(enabled, bool):
            raise SchemaViolation(f"{path}.enabled", "expected true or false")
        if intensity not in EFFECT_INTENSITIES:
            raise SchemaViolation(f"{path}.intensity", f"{intensity!r} not one of low | medium | high")
        if not enabled and intensity != "low":
            warnings.warn(
                f"{name}: disabled effect had intensity {intensity!r}; coerced to 'low'",
                ParticleRuleWarning,
                stacklevel=2,
            )
            intensity = "low"
        out.append(ParticleEffectConfig(name, enabled, intensity))
    return out
