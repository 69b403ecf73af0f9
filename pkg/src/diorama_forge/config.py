"""Pipeline configuration loaded from a JSON file.

Recognized keys (all optional)::

    mode                   "live" | "record" | "replay"
    fixtures_dir           fixture store root (required for record/replay)
    seed                   unsigned integer, default 42
    event_id               overrides the input directory name
    camera                 {"extent_east", "extent_north", "image_width", "image_height"}
    terrain                heightfield JSON path; flat ground at 0 m when absent
    max_parallel_requests  integer >= 1, default 4
    segmentation_prompt    text prompt for masking, default "person"
    waypoint_count         route waypoints after resampling, default 16
    group_density          persons per square meter for group cues, default 0.02
    verb_table             {"keyword": ["Variant", speed_or_null], ...} merged over the defaults
    sun_table              {"time_of_day": [elevation, azimuth, intensity], ...} merged over the defaults
    endpoints              {"request kind": "https://..."} for live/record calls
    manual_flags           {"element_id": "note"} human overrides for the stage log
    diorama_scale          advisory ratio string, default "1:500"

Relative paths are resolved against the config file's directory. API keys
come only from the environment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .geometry import OrthoCameraSpec
from .layers import DEFAULT_VERB_TABLE, GROUP_DENSITY, SUN_TABLE
from .providers import MODES

_KEYS = {
    "mode", "fixtures_dir", "seed", "event_id", "camera", "terrain", "max_parallel_requests",
    "segmentation_prompt", "waypoint_count", "group_density", "verb_table", "sun_table",
    "endpoints", "manual_flags", "diorama_scale",
}
_CAMERA_KEYS = {"extent_east", "extent_north", "image_width", "image_height"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "replay"
    fixtures_dir: Path | None = None
    seed: int = 42
    event_id: str | None = None
    camera: OrthoCameraSpec = OrthoCameraSpec()
    terrain: Path | None = None
    max_parallel_requests: int = 4
    segmentation_prompt: str = "person"
    waypoint_count: int = 16
    group_density: float = GROUP_DENSITY
    verb_table: Mapping[str, tuple[str, float | None]] = field(default_factory=lambda: dict(DEFAULT_VERB_TABLE))
    sun_table: Mapping[str, tuple[float, float, str]] = field(default_factory=lambda: dict(SUN_TABLE))
    endpoints: Mapping[str, str] = field(default_factory=dict)
    manual_flags: Mapping[str, str] = field(default_factory=dict)
    diorama_scale: str = "1:500"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "replay" and self.fixtures_dir is None:
            raise ConfigError("replay mode requires fixtures_dir")
        if self.mode == "record" and self.fixtures_dir is None:
            raise ConfigError("record mode requires fixtures_dir")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be an unsigned integer")
        if not isinstance(self.max_parallel_requests, int) or self.max_parallel_requests < 1:
            raise ConfigError("max_parallel_requests must be an integer >= 1")
        if self.waypoint_count < 2:
            raise ConfigError("waypoint_count must be >= 2")
        if self.group_density < 0:
            raise ConfigError("group_density must be >= 0")

    def with_overrides(self, **changes: Any) -> "PipelineConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        if "fixtures_dir" in changes:
            changes["fixtures_dir"] = Path(changes["fixtures_dir"])
        try:
            return replace(self, **changes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _path(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_config(path: str | Path | None = None, **overrides: Any) -> PipelineConfig:
    """Read a config file (if any) and apply command-line overrides on top."""
    raw: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        base = path.parent
    unknown = set(raw) - _KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    kwargs: dict[str, Any] = {}
    for key in ("mode", "seed", "event_id", "max_parallel_requests", "segmentation_prompt",
                "waypoint_count", "group_density", "diorama_scale"):
        if key in raw:
            kwargs[key] = raw[key]
    if "fixtures_dir" in raw:
        kwargs["fixtures_dir"] = _path(base, raw["fixtures_dir"])
    if "terrain" in raw:
        kwargs["terrain"] = _path(base, raw["terrain"])
    if "camera" in raw:
        cam = raw["camera"]
        if not isinstance(cam, dict) or set(cam) - _CAMERA_KEYS:
            raise ConfigError(f"camera accepts only {sorted(_CAMERA_KEYS)}")
        try:
            kwargs["camera"] = replace(OrthoCameraSpec(), **cam)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad camera settings: {exc}") from exc
    if "verb_table" in raw:
        table = dict(DEFAULT_VERB_TABLE)
        for k, (variant, speed) in raw["verb_table"].items():
            table[k] = (variant, speed)
        kwargs["verb_table"] = table
    if "sun_table" in raw:
        table = dict(SUN_TABLE)
        for k, (elev, az, inten) in raw["sun_table"].items():
            table[k] = (float(elev), float(az), inten)
        kwargs["sun_table"] = table
    for key in ("endpoints", "manual_flags"):
        if key in raw:
            kwargs[key] = dict(raw[key])

    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "fixtures_dir" in overrides:
        overrides["fixtures_dir"] = Path(overrides["fixtures_dir"])
    kwargs.update(overrides)
    try:
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
