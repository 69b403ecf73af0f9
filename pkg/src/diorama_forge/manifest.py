"""Scene manifest assembly, canonical emission and parsing.

Output layout for one event::

    <out>/<event_id>/scene.json     canonical manifest (written last)
    <out>/<event_id>/terrain.json   heightfield
    <out>/<event_id>/assets/        *.glb meshes, *.png textures
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__, canonical
from .errors import DanglingAssetReference, IoError
from .geometry import OrthoCameraSpec, TerrainModel
from .layers import GeoSurface, LightingRig, PlacedElement
from .model import GeoLocation, ParticleEffectConfig

FORMAT_VERSION = "1.0"
DEFAULT_DIORAMA_SCALE = "1:500"


@dataclass(frozen=True)
class ParticleTexture:
    element_id: str
    particle_type: str
    texture: str

    def to_dict(self) -> dict:
        return {"element_id": self.element_id, "particle_type": self.particle_type, "texture": self.texture}


@dataclass(frozen=True)
class Provenance:
    photo_ids: tuple[str, ...]
    request_digests: tuple[str, ...]
    seed: int
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "photo_ids": list(self.photo_ids),
            "request_digests": list(self.request_digests),
            "seed": int(self.seed),
            "tool_version": self.tool_version,
        }


@dataclass(frozen=True)
class SceneManifest:
    event_id: str
    anchor: GeoLocation
    camera: OrthoCameraSpec
    terrain_texture: str | None
    elements: tuple[PlacedElement, ...]
    pedestrians: tuple[PlacedElement, ...]
    particles: tuple[ParticleEffectConfig, ...]
    particle_textures: tuple[ParticleTexture, ...]
    lighting: LightingRig
    geography: GeoSurface
    provenance: Provenance
    diorama_scale: str = DEFAULT_DIORAMA_SCALE
    version: str = FORMAT_VERSION
    terrain: TerrainModel | None = field(default=None, compare=False, repr=False)
    # asset reference -> file bytes
    files: Mapping[str, bytes] = field(default_factory=dict, compare=False, repr=False)

    def asset_refs(self) -> list[str]:
        refs = {e.asset for e in self.elements} | {p.asset for p in self.pedestrians}
        refs |= {t.texture for t in self.particle_textures}
        if self.terrain_texture:
            refs.add(self.terrain_texture)
        return sorted(refs)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "event_id": self.event_id,
            "anchor": self.anchor.to_dict(),
            "camera": self.camera.to_dict(),
            "terrain": {"heightfield": "terrain.json", "texture": self.terrain_texture},
            "elements": [e.to_dict() for e in self.elements],
            "pedestrians": [p.to_dict() for p in self.pedestrians],
            "particles": {
                "effects": [c.to_dict() for c in self.particles],
                "textured": [t.to_dict() for t in self.particle_textures],
            },
            "lighting": self.lighting.to_dict(),
            "geography": self.geography.to_dict(),
            "diorama_scale": self.diorama_scale,
            "provenance": self.provenance.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping, terrain: TerrainModel | None = None, files: Mapping[str, bytes] | None = None):
        prov = d["provenance"]
        return cls(
            event_id=d["event_id"],
            anchor=GeoLocation.from_dict(d["anchor"]),
            camera=OrthoCameraSpec.from_dict(d["camera"]),
            terrain_texture=d["terrain"].get("texture"),
            elements=tuple(PlacedElement.from_dict(e) for e in d["elements"]),
            pedestrians=tuple(PlacedElement.from_dict(p) for p in d["pedestrians"]),
            particles=tuple(ParticleEffectConfig(c["effect"], c["enabled"], c["intensity"]) for c in d["particles"]["effects"]),
            particle_textures=tuple(
                ParticleTexture(t["element_id"], t["particle_type"], t["texture"]) for t in d["particles"]["textured"]
            ),
            lighting=LightingRig.from_dict(d["lighting"]),
            geography=GeoSurface.from_dict(d["geography"]),
            provenance=Provenance(
                tuple(prov["photo_ids"]), tuple(prov["request_digests"]), int(prov["seed"]), prov["tool_version"]
            ),
            diorama_scale=d["diorama_scale"],
            version=d["version"],
            terrain=terrain,
            files=dict(files or {}),
        )

    def to_json(self) -> str:
        return canonical.dumps(self.to_dict())


def _requantize(m: SceneManifest) -> SceneManifest:
    """Pass through canonical JSON so every float already has its emitted value."""
    terrain = None if m.terrain is None else TerrainModel.from_dict(json.loads(m.terrain.dump_bytes()))
    return SceneManifest.from_dict(json.loads(m.to_json()), terrain, m.files)


def _sort_key(e: PlacedElement):
    return (e.layer, e.element_id)


def compose_manifest(
    *,
    event_id: str,
    anchor: GeoLocation,
    camera: OrthoCameraSpec,
    terrain: TerrainModel,
    elements: Sequence[PlacedElement] = (),
    pedestrians: Sequence[PlacedElement] = (),
    particles: Sequence[ParticleEffectConfig] = (),
    particle_textures: Sequence[ParticleTexture] = (),
    lighting: LightingRig,
    geography: GeoSurface = GeoSurface(),
    provenance: Provenance,
    files: Mapping[str, bytes | Path] | None = None,
    diorama_scale: str = DEFAULT_DIORAMA_SCALE,
) -> SceneManifest:
    """Assemble layer outputs into one manifest, checking every asset reference.

    ``files`` maps asset references (``assets/<name>``) to bytes or to paths
    of existing files.
    """
    resolved: dict[str, bytes] = {}
    for ref, src in (files or {}).items():
        if isinstance(src, (bytes, bytearray)):
            resolved[ref] = bytes(src)
        else:
            path = Path(src)
            if not path.is_file():
                raise DanglingAssetReference(ref)
            resolved[ref] = path.read_bytes()
    m = SceneManifest(
        event_id=event_id,
        anchor=anchor,
        camera=camera,
        terrain_texture=geography.terrain_texture,
        elements=tuple(sorted(elements, key=_sort_key)),
        pedestrians=tuple(sorted(pedestrians, key=_sort_key)),
        particles=tuple(particles),
        particle_textures=tuple(sorted(particle_textures, key=lambda t: t.element_id)),
        lighting=lighting,
        geography=geography,
        provenance=provenance,
        diorama_scale=diorama_scale,
        terrain=terrain,
        files=resolved,
    )
    for ref in m.asset_refs():
        if ref not in resolved:
            raise DanglingAssetReference(ref)
    # only referenced files are carried into the output
    m = replace(m, files={ref: resolved[ref] for ref in m.asset_refs()})
    return _requantize(m)


def emit(
    manifest: SceneManifest, out_dir: str | Path, extra_files: Mapping[str, bytes] | None = None
) -> list[Path]:
    """Write the manifest tree to ``<out_dir>/<event_id>/``, replacing it whole.

    The tree is built in a sibling temporary directory and swapped in, so a
    reader never sees a half-written event. ``scene.json`` is written last.
    """
    out_dir = Path(out_dir)
    target = out_dir / manifest.event_id
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        # leftovers of a run that was killed mid-emit
        for stale in out_dir.glob(f".{manifest.event_id}.*"):
            shutil.rmtree(stale, ignore_errors=True)
        staging = Path(tempfile.mkdtemp(prefix=f".{manifest.event_id}.", dir=out_dir))
        staging.chmod(0o755)
    except OSError as exc:
        raise IoError(out_dir, str(exc)) from exc
    written: list[str] = []
    try:
        def put(rel: str, data: bytes) -> None:
            path = staging / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
            written.append(rel)

        for ref in manifest.asset_refs():
            put(ref, manifest.files[ref])
        for rel, data in sorted((extra_files or {}).items()):
            put(rel, data)
        terrain = manifest.terrain if manifest.terrain is not None else TerrainModel.flat()
        put("terrain.json", terrain.dump_bytes())
        put("scene.json", manifest.to_json().encode("utf-8"))

        trash = None
        if target.exists():
            trash = Path(tempfile.mkdtemp(prefix=f".{manifest.event_id}.old.", dir=out_dir))
            os.replace(target, trash / "tree")
        os.replace(staging, target)
        if trash is not None:
            shutil.rmtree(trash, ignore_errors=True)
    except KeyError as exc:
        shutil.rmtree(staging, ignore_errors=True)
        raise DanglingAssetReference(str(exc.args[0])) from exc
    except OSError as exc:
        shutil.rmtree(staging, ignore_errors=True)
        raise IoError(target, str(exc)) from exc
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return [target / rel for rel in written]


def load_manifest(event_dir: str | Path) -> SceneManifest:
    event_dir = Path(event_dir)
    doc = json.loads((event_dir / "scene.json").read_text(encoding="utf-8"))
    terrain = TerrainModel.load(event_dir / "terrain.json")
    manifest = SceneManifest.from_dict(doc, terrain)
    files = {}
    for ref in manifest.asset_refs():
        path = event_dir / ref
        if not path.is_file():
            raise DanglingAssetReference(ref)
        files[ref] = path.read_bytes()
    return replace(manifest, files=files)
