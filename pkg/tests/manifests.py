"""Random but valid scene manifests for round-trip and byte-stability checks."""

from __future__ import annotations

import numpy as np

from diorama_forge import glb
from diorama_forge.geometry import OrthoCameraSpec, TerrainModel, WorldPoint, build_spline
from diorama_forge.layers import (
    CLIPS,
    GeoSurface,
    LightingRig,
    PlacedElement,
    RiggedClip,
    RouteFollow,
    Static,
    Sun,
    VerticalBob,
    WaterRegion,
)
from diorama_forge.manifest import ParticleTexture, Provenance, compose_manifest
from diorama_forge.model import EFFECT_INTENSITIES, EFFECTS, GeoLocation, ParticleEffectConfig

CAMERA = OrthoCameraSpec(0.0, 0.0, 200.0, 200.0, 2048, 2048)


def _pt(rng, lo=-99.0, hi=99.0) -> WorldPoint:
    # full double precision on purpose: emission has to round these
    return WorldPoint(float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi)), float(rng.uniform(-5, 30)))


def _animation(rng):
    k = int(rng.integers(4))
    if k == 0:
        return Static()
    if k == 1:
        return VerticalBob(float(rng.uniform(0.5, 10)), float(rng.uniform(1, 40)))
    if k == 2:
        pts = [_pt(rng) for _ in range(int(rng.integers(2, 7)))]
        return RouteFollow(build_spline(pts), float(rng.uniform(0.5, 20)))
    return RiggedClip(CLIPS[int(rng.integers(len(CLIPS)))])


def random_manifest(seed: int, event_id: str = "evt"):
    rng = np.random.default_rng(seed)
    files = {}
    elements = []
    for i in range(int(rng.integers(0, 5))):
        eid = f"obj_{i}"
        anim = _animation(rng)
        pos = anim.spline.control_points[0] if isinstance(anim, RouteFollow) else _pt(rng)
        layer = "human" if isinstance(anim, RiggedClip) else "object"
        ref = f"assets/{eid}.glb"
        files[ref] = glb.box_glb(1.0, float(rng.uniform(0.5, 3)), 1.0, name=eid)
        elements.append(PlacedElement(eid, ref, pos, float(rng.uniform(0, 360)), float(rng.uniform(0.1, 10)), anim, layer))
    pedestrians = []
    if rng.random() < 0.5:
        files["assets/walker_a.glb"] = glb.box_glb(0.5, 1.7, 0.3, name="walker_a")
        for i in range(int(rng.integers(1, 4))):
            pedestrians.append(PlacedElement(
                f"crowd_{i:03d}", "assets/walker_a.glb", _pt(rng), float(rng.uniform(0, 360)), 1.0,
                RiggedClip(CLIPS[i % 3]), "human",
            ))
    particles = []
    for effect in EFFECTS:
        on = bool(rng.random() < 0.4)
        level = EFFECT_INTENSITIES[int(rng.integers(3))] if on else "low"
        particles.append(ParticleEffectConfig(effect, on, level))
    textured = []
    if rng.random() < 0.3:
        files["assets/petals.png"] = b"\x89PNG fake"
        textured.append(ParticleTexture("petals", "blossoms", "assets/petals.png"))
    texture = None
    if rng.random() < 0.5:
        texture = "assets/ground.png"
        files[texture] = b"\x89PNG ground"
    water = tuple(
        WaterRegion(f"water_{i}", tuple(_pt(rng) for _ in range(4)), float(rng.uniform(0.05, 0.3)), float(rng.uniform(2, 8)))
        for i in range(int(rng.integers(0, 3)))
    )
    lighting = LightingRig(
        Sun(float(rng.uniform(-90, 90)), float(rng.uniform(0, 359.9)), "medium"),
        tuple(_pt(rng) for _ in range(int(rng.integers(0, 3)))),
        tuple(sorted(e.element_id for e in elements[:1])),
    )
    terrain = TerrainModel(rng.uniform(0, 10, size=(5, 5)), -100.0, -100.0, 50.0)
    return compose_manifest(
        event_id=event_id,
        anchor=GeoLocation(float(rng.uniform(-80, 80)), float(rng.uniform(-179, 179)), float(rng.uniform(0, 100))),
        camera=CAMERA,
        terrain=terrain,
        elements=elements,
        pedestrians=pedestrians,
        particles=particles,
        particle_textures=textured,
        lighting=lighting,
        geography=GeoSurface(texture, water),
        provenance=Provenance(("p1", "p2"), tuple(sorted(f"{int(rng.integers(2**62)):064x}" for _ in range(3))), seed),
        files=files,
    )
