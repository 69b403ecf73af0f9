"""Fixed prompt templates sent to the generative services.

Templates live as text files next to this module and are never edited at
runtime; only the declared slots are substituted.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

# template name -> declared substitution slots
SLOTS: dict[str, tuple[str, ...]] = {
    "scene_analysis": (),
    "location_estimate": ("joined",),
    "geo_texture": ("scene_summary", "surface_cover_type", "surface_cover_description"),
    "particle_texture": ("scene_summary", "particle_type", "motion_description"),
    "position": ("object",),
    "area": ("object",),
    "route": ("object",),
    "particle_classifier": (),
}


@lru_cache(maxsize=None)
def template(name: str) -> str:
    if name not in SLOTS:
        raise KeyError(f"unknown prompt template {name!r}")
    return resources.files(__package__).joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")


def render(name: str, **values: str) -> str:
    """Fill a template's slots. Templates without slots are returned untouched."""
    slots = SLOTS[name]
    missing = set(slots) - set(values)
    extra = set(values) - set(slots)
    if missing or extra:
        raise ValueError(f"{name}: missing slots {sorted(missing)}, unexpected {sorted(extra)}")
    text = template(name)
    if not slots:
        return text
    # slot templates use str.format escaping ({{ }} for literal braces)
    return text.format(**values)
