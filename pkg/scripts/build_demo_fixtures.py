#!/usr/bin/env python3
"""Rebuild the shipped demo event under fixtures/demo_event/.

Writes five small photos with EXIF GPS (one without a fix, one stale fix
about 100 km away), an asymmetric heightfield, a config, the synthetic
service script (synthetic.json) and a recorded fixture store. Finishes by
replaying the event once to make sure every fixture is present.

Usage: python3 scripts/build_demo_fixtures.py [--root fixtures/demo_event]
"""

from __future__ import annotations

import argparse
import io
import json
import shutil
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from diorama_forge.config import load_config
from diorama_forge.geometry import TerrainModel, ground_to_pixel
from diorama_forge.pipeline import run_pipeline
from diorama_forge.synthetic import SyntheticTransport

EVENT_ID = "demo_event"
IMAGE_SIZE = 512
EXTENT = 200.0

PHOTOS = {
    # id: ((lat, lon, alt) or None, base colour)
    "IMG_0001": ((35.3090, 139.5500, 4.0), (40, 110, 170)),
    "IMG_0002": ((35.3092, 139.5503, 5.0), (210, 150, 80)),
    "IMG_0003": ((35.3088, 139.5498, 3.0), (90, 160, 90)),
    "IMG_0004": (None, (180, 90, 120)),
    "IMG_0005": ((36.2100, 139.5500, 120.0), (120, 120, 200)),
}

SCENE = {
    "event_summary": {
        "scene_type": "seaside festival",
        "location_context": "coastal town with a beach promenade",
        "environment": "outdoor",
        "time_of_day": "sunset",
        "weather": "foggy",
        "overall_description": "An evening beach festival with a balloon, a ferris wheel and crowds by the sea.",
    },
    "objects": {
        "balloon": {
            "images": ["IMG_0001"], "label": "hot air balloon", "description": "striped balloon above the beach",
            "animation": "floating in place", "size": "large", "confidence": 0.9,
        },
        "car": {
            "images": ["IMG_0002"], "label": "red car", "description": "small red hatchback",
            "animation": "driving along the coast road", "size": "medium", "confidence": 0.8,
        },
        "ferris_wheel": {
            "images": ["IMG_0003", "IMG_0004"], "label": "ferris wheel", "description": "lit ferris wheel",
            "animation": "static", "size": "large", "confidence": 0.95,
        },
        "lighthouse": {
            "images": ["IMG_0005"], "label": "lighthouse", "description": "white lighthouse on the point",
            "animation": "static", "size": "large", "confidence": 0.7,
        },
    },
    "humans": {
        "crowd": {
            "images": ["IMG_0002", "IMG_0003"], "count_type": "group", "description": "festival visitors",
            "animation": "walking", "pose_or_activity": "strolling between stalls", "confidence": 0.85,
        },
        "surfer": {
            "images": ["IMG_0001"], "count_type": "individual", "description": "surfer carrying a board",
            "animation": "walking along the shore", "pose_or_activity": "walking", "confidence": 0.75,
        },
    },
    "geography": {
        "beach": {
            "images": ["IMG_0001"], "type": "beach", "description": "wide sandy beach",
            "dynamic_state": "static", "confidence": 0.9,
        },
        "ocean": {
            "images": ["IMG_0001", "IMG_0005"], "type": "ocean", "description": "calm sea with small waves",
            "dynamic_state": "waving", "confidence": 0.9,
        },
    },
    "lighting": {
        "glow": {
            "images": ["IMG_0001"], "type": "sunset", "description": "orange evening sky",
            "intensity": "medium", "direction_or_area": "west", "confidence": 0.8,
        },
        "lamp": {
            "images": ["IMG_0002"], "type": "streetlight", "description": "promenade lamp",
            "intensity": "low", "direction_or_area": "promenade", "confidence": 0.6,
        },
        "wheel_lights": {
            "images": ["IMG_0003"], "type": "decorative_light", "description": "bulbs on the ferris wheel",
            "intensity": "high", "direction_or_area": "ferris_wheel", "confidence": 0.9,
        },
    },
    "particles": {
        "haze": {
            "images": ["IMG_0005"], "type": "fog", "description": "sea haze drifting inland",
            "intensity": "medium", "confidence": 0.6,
        },
        "petals": {
            "images": ["IMG_0003"], "type": "blossoms", "description": "petals drifting slowly down",
            "intensity": "low", "confidence": 0.5,
        },
    },
}

# world-space marks (east, north in meters); converted to canvas pixels below
WORLD_MARKS = {
    "balloon": {"type": "Position", "point": (30.0, 20.0)},
    "car": {"type": "Route", "path": [(-80.0, -40.0), (-20.0, -46.0), (30.0, -36.0), (80.0, -30.0)]},
    "ferris_wheel": {"type": "Position", "point": (-50.0, 40.0)},
    "lighthouse": {"type": "Position", "point": (70.0, -55.0)},
    "crowd": {"type": "Area", "polygon": [(-30.0, 10.0), (10.0, 10.0), (10.0, 40.0), (-30.0, 40.0)]},
    "surfer": {"type": "Route", "path": [(-70.0, -62.0), (-10.0, -66.0), (40.0, -63.0)]},
    "ocean": {"type": "Area", "polygon": [(-92.0, -92.0), (92.0, -92.0), (92.0, -74.0), (-92.0, -74.0)]},
    "lamp": {"type": "Position", "point": (0.0, -20.0)},
}

MESH_SIZES = {
    "balloon": (10.0, 15.0, 10.0),
    "car": (2.0, 1.5, 4.5),
    "ferris_wheel": (20.0, 25.0, 4.0),
    "lighthouse": (4.0, 20.0, 4.0),
    "surfer": (0.6, 1.8, 0.4),
}


def terrain() -> TerrainModel:
    """Sloping coast with two unequal hills and a ridge; no rotational symmetry."""
    cell = 10.0
    n = 21
    coords = -100.0 + cell * np.arange(n)
    ee, nn = np.meshgrid(coords, coords)
    h = 0.06 * (nn + 100.0)
    h += 14.0 * np.exp(-((ee - 45.0) ** 2 + (nn - 55.0) ** 2) / (2 * 22.0 ** 2))
    h += 6.0 * np.exp(-((ee + 60.0) ** 2 + (nn - 10.0) ** 2) / (2 * 12.0 ** 2))
    h += 3.0 * np.exp(-((ee + 0.4 * nn - 20.0) ** 2) / (2 * 6.0 ** 2)) * (nn > -20)
    return TerrainModel(np.round(h, 3), -100.0, -100.0, cell)


def _pixel_marks(cam) -> dict:
    def px(p):
        u, v = ground_to_pixel(p[0], p[1], cam)
        return [round(u, 3), round(v, 3)]

    out = {}
    for eid, m in WORLD_MARKS.items():
        if m["type"] == "Position":
            out[eid] = {"type": "Position", "pixel": px(m["point"])}
        elif m["type"] == "Area":
            out[eid] = {"type": "Area", "polygon": [px(p) for p in m["polygon"]]}
        else:
            out[eid] = {"type": "Route", "path": [px(p) for p in m["path"]]}
    return out


def _dms(value: float) -> tuple[float, float, float]:
    value = abs(value)
    d = int(value)
    m = int((value - d) * 60)
    s = round((value - d - m / 60) * 3600, 4)
    return float(d), float(m), s


def photo_bytes(pid: str, gps, colour) -> bytes:
    im = Image.new("RGB", (160, 120), colour)
    draw = ImageDraw.Draw(im)
    seed = sum(ord(c) for c in pid)
    for k in range(6):
        x = (seed * (k + 3) * 37) % 150
        y = (seed * (k + 5) * 23) % 110
        shade = tuple((c + 60 * (k + 1)) % 256 for c in colour)
        draw.ellipse([x, y, x + 10 + 2 * k, y + 8 + k], fill=shade)
    exif = Image.Exif()
    exif[0x0132] = "2024:08:17 18:%02d:00" % (10 + int(pid[-1]))
    if gps is not None:
        lat, lon, alt = gps
        exif[0x8825] = {
            1: "N" if lat >= 0 else "S", 2: _dms(lat),
            3: "E" if lon >= 0 else "W", 4: _dms(lon),
            5: b"\x00", 6: float(alt),
        }
    buf = io.BytesIO()
    im.save(buf, "JPEG", quality=90, exif=exif.tobytes())
    return buf.getvalue()


def build(root: Path) -> None:
    if root.exists():
        shutil.rmtree(root)
    (root / "photos").mkdir(parents=True)
    for pid, (gps, colour) in PHOTOS.items():
        (root / "photos" / f"{pid}.jpg").write_bytes(photo_bytes(pid, gps, colour))
    (root / "terrain.json").write_bytes(terrain().dump_bytes())
    config = {
        "mode": "replay",
        "fixtures_dir": "fixtures",
        "seed": 42,
        "event_id": EVENT_ID,
        "terrain": "terrain.json",
        "camera": {"extent_east": EXTENT, "extent_north": EXTENT, "image_width": IMAGE_SIZE, "image_height": IMAGE_SIZE},
    }
    (root / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")

    cfg = load_config(root / "config.json")
    synthetic = {
        "scene": SCENE,
        "location": {"latitude": 35.309, "longitude": 139.55, "height": 4.0},
        "marks": _pixel_marks(cfg.camera),
        "mesh_sizes": {k: list(v) for k, v in MESH_SIZES.items()},
    }
    (root / "synthetic.json").write_text(json.dumps(synthetic, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    transport = SyntheticTransport(
        SCENE, synthetic["location"], synthetic["marks"], mesh_sizes={k: tuple(v) for k, v in MESH_SIZES.items()}
    )
    with tempfile.TemporaryDirectory() as tmp:
        run_pipeline(root / "photos", tmp, cfg.with_overrides(mode="record"), transport=transport)
        result = run_pipeline(root / "photos", Path(tmp) / "replay", cfg)
    for stage in result.log.stages:
        bad = [f"{i.item_id}:{i.detail}" for i in stage.items if i.outcome != "ok"]
        print(f"{stage.stage}: {len(stage.items)} items, not ok: {bad or 'none'}")
    print(f"{len(list((root / 'fixtures').iterdir()))} fixtures recorded under {root / 'fixtures'}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--root", type=Path, default=Path(__file__).resolve().parents[1] / "fixtures" / EVENT_ID)
    build(parser.parse_args().root)


if __name__ == "__main__":
    main()
