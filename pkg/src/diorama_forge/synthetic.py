"""Deterministic stand-in for the generative services.

Used to record the shipped demo fixtures and in tests. Every response is a
pure function of the request, so recording twice gives identical fixtures.
"""

from __future__ import annotations

import hashlib
import json
from typing import Mapping

import cv2
import numpy as np

from . import glb, providers
from .errors import TransportError

RED = (255, 0, 0)
BLUE = (0, 0, 255)


def _rng(req: providers.ProviderRequest) -> np.random.Generator:
    seed = int.from_bytes(hashlib.sha256(req.canonical_bytes()).digest()[:8], "little")
    return np.random.default_rng(seed)


def paint_mark(base: np.ndarray, spec: Mapping) -> np.ndarray:
    """Draw a Position, Area or Route mark (pixel coordinates) onto a copy of ``base``."""
    img = np.ascontiguousarray(base.copy())
    kind = spec["type"]
    if kind == "Position":
        u, v = spec["pixel"]
        cv2.circle(img, (int(round(u)), int(round(v))), int(spec.get("radius", 6)), RED, -1)
    elif kind == "Area":
        pts = np.round(np.asarray(spec["polygon"], float)).astype(np.int32)
        cv2.polylines(img, [pts], True, RED, int(spec.get("thickness", 4)))
    elif kind == "Route":
        pts = np.round(np.asarray(spec["path"], float)).astype(np.int32)
        cv2.polylines(img, [pts], False, RED, int(spec.get("thickness", 8)))
        su, sv = spec.get("start", spec["path"][0])
        cv2.circle(img, (int(round(su)), int(round(sv))), int(spec.get("start_radius", 8)), BLUE, -1)
    else:
        raise ValueError(f"unknown mark type {kind!r}")
    return img


def noise_canvas(shape, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 256, size=shape, dtype=np.uint8)


class SyntheticTransport:
    """Fabricates a plausible payload for each request kind.

    Args:
        scene: scene-description document returned for scene analysis.
        location: ``{"latitude", "longitude", "height"}`` for the location fallback.
        marks: element id -> mark spec for :func:`paint_mark`.
        corrupt: element ids whose canvases come back as pure noise.
        mesh_sizes: element id -> (width, height, depth) of the generated box.
    """

    def __init__(
        self,
        scene: Mapping,
        location: Mapping | None = None,
        marks: Mapping[str, Mapping] | None = None,
        corrupt=(),
        mesh_sizes: Mapping[str, tuple[float, float, float]] | None = None,
    ):
        self.scene = scene
        self.location = location or {"latitude": 0.0, "longitude": 0.0, "height": 0.0}
        self.marks = dict(marks or {})
        self.corrupt = set(corrupt)
        self.mesh_sizes = dict(mesh_sizes or {})
        self.calls = 0

    def send(self, req: providers.ProviderRequest) -> tuple[bytes, str]:
        self.calls += 1
        handler = getattr(self, f"_{req.kind}")
        return handler(req), "synthetic/1"

    def _location_estimate(self, req) -> bytes:
        return json.dumps({"results": dict(self.location)}).encode("utf-8")

    def _scene_analysis(self, req) -> bytes:
        return json.dumps(self.scene, sort_keys=True).encode("utf-8")

    def _segmentation(self, req) -> bytes:
        photo = providers.decode_image(req.attachments[0].data)
        gray = cv2.cvtColor(photo, cv2.COLOR_RGB2GRAY)
        mask = np.where(gray > int(np.median(gray)), 255, 0).astype(np.uint8)
        return providers.encode_png(np.dstack([mask] * 3))

    def _asset_generation(self, req) -> bytes:
        eid = req.params["element_id"]
        w, h, d = self.mesh_sizes.get(eid, (1.0, 1.0, 1.0))
        return glb.box_glb(w, h, d, name=eid)

    def _texture_generation(self, req) -> bytes:
        rng = _rng(req)
        tile = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        tex = cv2.resize(tile, (64, 64), interpolation=cv2.INTER_LINEAR)
        return providers.encode_png(tex)

    def _annotation_painting(self, req) -> bytes:
        eid = req.params["element_id"]
        base = providers.decode_image(req.attachments[0].data)
        if eid in self.corrupt or eid not in self.marks:
            return providers.encode_png(noise_canvas(base.shape, _rng(req)))
        return providers.encode_png(paint_mark(base, self.marks[eid]))


class FailingTransport:
    """Counts and rejects every call; proves replay never reaches the network."""

    def __init__(self):
        self.attempts = 0

    def send(self, req):
        self.attempts += 1
        raise TransportError("network disabled")
