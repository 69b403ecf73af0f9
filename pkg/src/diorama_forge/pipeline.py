"""End-to-end orchestration: photo analysis, element generation, placement.

Each phase reads and extends an :class:`EventState`. The state serializes to
the intermediate files of an event directory, so phases can also run one at
a time from the command line::

    scene_description.json   validated scene analysis
    anchor.json              event location and where it came from
    masks/<photo_id>.png     segmentation output per photo
    generated/<id>.glb|png   generated meshes and textures
    annotations/<id>.png     painted top-down canvases
    marks/<id>.json          extracted marks, projected points, placements
    requests.json            request digests consumed, per stage

Timing lives only in stage logs, which are written outside the event tree so
that output trees stay byte-identical across runs.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import canonical, providers
from .annotate import (
    ALIGNMENT_THRESHOLD,
    AREA,
    POSITION,
    ROUTE,
    AnnotatedCanvas,
    extract_area,
    extract_position,
    extract_route,
    verify_canvas_alignment,
)
from .config import PipelineConfig
from .errors import ForgeError, MalformedPayload, OutOfFrame
from .geometry import OrthoCameraSpec, TerrainModel, WorldPoint, project_annotation, render_base_map
from .ingest import PhotoCollection, aggregate_locations, load_collection
from .layers import (
    PedestrianField,
    PlacedElement,
    ProjectedMark,
    StockCatalog,
    clip_weights_for,
    compose_geography,
    configure_lighting,
    configure_particles,
    human_template,
    object_template,
    place_object,
    place_static_human,
    route_humans,
    spawn_pedestrians,
    textured_particles,
)
from .manifest import ParticleTexture, Provenance, SceneManifest, compose_manifest, emit
from .model import GeoLocation, SceneDescription, validate_scene_description

logger = logging.getLogger(__name__)

PHOTO_ANALYSIS = "photo_analysis"
ELEMENT_GENERATION = "element_generation"
PLACEMENT_ROUTE = "placement_route"
STAGES = (PHOTO_ANALYSIS, ELEMENT_GENERATION, PLACEMENT_ROUTE)

OK, FAILED, MANUAL = "ok", "failed", "manual_flag"


class PipelineFailure(ForgeError):
    """The run cannot continue (e.g. no usable scene description)."""

    def __init__(self, message: str, log: "RunLog | None" = None):
        super().__init__(message)
        self.log = log


# stage logs ------------------------------------------------------------------

@dataclass
class ItemRecord:
    item_id: str
    wall_time_s: float
    outcome: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {"item_id": self.item_id, "wall_time_s": self.wall_time_s, "outcome": self.outcome, "detail": self.detail}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ItemRecord":
        return cls(d["item_id"], float(d["wall_time_s"]), d["outcome"], d.get("detail", ""))


@dataclass
class StageLog:
    stage: str
    items: list[ItemRecord] = field(default_factory=list)
    elapsed_s: float | None = None

    def to_dict(self) -> dict:
        return {"stage": self.stage, "elapsed_s": self.elapsed_s, "items": [i.to_dict() for i in self.items]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "StageLog":
        elapsed = d.get("elapsed_s")
        return cls(d["stage"], [ItemRecord.from_dict(i) for i in d["items"]], None if elapsed is None else float(elapsed))


@dataclass
class RunLog:
    event_id: str
    seed: int
    mode: str
    stages: list[StageLog] = field(default_factory=list)
    end_to_end_s: float | None = None

    def stage(self, name: str) -> StageLog | None:
        return next((s for s in self.stages if s.stage == name), None)

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "seed": self.seed,
            "mode": self.mode,
            "end_to_end_s": self.end_to_end_s,
            "stages": [s.to_dict() for s in self.stages],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunLog":
        e2e = d.get("end_to_end_s")
        return cls(
            d.get("event_id", ""), int(d.get("seed", 0)), d.get("mode", ""),
            [StageLog.from_dict(s) for s in d["stages"]], None if e2e is None else float(e2e),
        )

    def save(self, runs_dir: str | Path) -> Path:
        runs_dir = Path(runs_dir)
        runs_dir.mkdir(parents=True, exist_ok=True)
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
        path = runs_dir / f"{self.event_id}-{stamp}-{os.getpid()}.stage_log.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        return path


class _Recorder:
    """Collects item outcomes for one stage; safe to share across worker threads."""

    def __init__(self, stage: str, manual_flags: Mapping[str, str]):
        self.log = StageLog(stage)
        self._flags = manual_flags
        self._lock = threading.Lock()
        self._t0 = time.perf_counter()

    def run(self, item_id: str, fn: Callable[[], Any]):
        t0 = time.perf_counter()
        try:
            result = fn()
        except (ForgeError, ValueError) as exc:
            reason = getattr(exc, "reason_tag", None) or type(exc).__name__
            self._add(item_id, time.perf_counter() - t0, FAILED, reason)
            logger.warning("%s: %s failed: %s", self.log.stage, item_id, exc)
            return None
        self._add(item_id, time.perf_counter() - t0, OK)
        return result

    def _add(self, item_id: str, seconds: float, outcome: str, detail: str = "") -> None:
        if item_id in self._flags:
            outcome, detail = MANUAL, self._flags[item_id]
        with self._lock:
            self.log.items.append(ItemRecord(item_id, round(seconds, 6), outcome, detail))

    def close(self) -> StageLog:
        self.log.items.sort(key=lambda r: r.item_id)
        self.log.elapsed_s = round(time.perf_counter() - self._t0, 6)
        return self.log


class AlignmentRejected(ForgeError):
    reason_tag = "alignment"


# event state -----------------------------------------------------------------

@dataclass
class PlacementRecord:
    element_id: str
    role: str  # object | human | pedestrians | water | streetlight
    template: str
    alignment: float
    mark: dict
    points: tuple[WorldPoint, ...]
    placed: tuple[PlacedElement, ...] = ()

    def to_dict(self) -> dict:
        return {
            "element_id": self.element_id,
            "role": self.role,
            "template": self.template,
            "alignment": self.alignment,
            "mark": self.mark,
            "points": [p.to_list() for p in self.points],
            "placed": [e.to_dict() for e in self.placed],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PlacementRecord":
        return cls(
            d["element_id"], d["role"], d["template"], float(d["alignment"]), d["mark"],
            tuple(WorldPoint.from_list(p) for p in d["points"]),
            tuple(PlacedElement.from_dict(e) for e in d["placed"]),
        )


@dataclass
class EventState:
    event_id: str
    photo_ids: tuple[str, ...] = ()
    anchor: GeoLocation | None = None
    anchor_source: str = ""
    scene: SceneDescription | None = None
    masks: dict[str, bytes] = field(default_factory=dict)
    generated: dict[str, tuple[str, bytes]] = field(default_factory=dict)
    canvases: dict[str, bytes] = field(default_factory=dict)
    placements: dict[str, PlacementRecord] = field(default_factory=dict)
    digests: dict[str, list[str]] = field(default_factory=dict)

    def to_files(self) -> dict[str, bytes]:
        files: dict[str, bytes] = {}
        if self.scene is not None:
            files["scene_description.json"] = canonical.dump_bytes(self.scene.to_dict())
        if self.anchor is not None:
            files["anchor.json"] = canonical.dump_bytes({
                "event_id": self.event_id, "photo_ids": list(self.photo_ids),
                "location": self.anchor.to_dict(), "source": self.anchor_source,
            })
        for pid, data in self.masks.items():
            files[f"masks/{pid}.png"] = data
        for eid, (ext, data) in self.generated.items():
            files[f"generated/{eid}.{ext}"] = data
        for eid, data in self.canvases.items():
            files[f"annotations/{eid}.png"] = data
        for eid, rec in self.placements.items():
            files[f"marks/{eid}.json"] = canonical.dump_bytes(rec.to_dict())
        if self.digests:
            files["requests.json"] = canonical.dump_bytes({k: sorted(v) for k, v in self.digests.items()})
        return files

    def write(self, event_dir: str | Path) -> None:
        event_dir = Path(event_dir)
        for rel, data in self.to_files().items():
            path = event_dir / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)

    @classmethod
    def load(cls, event_dir: str | Path) -> "EventState":
        event_dir = Path(event_dir)
        anchor_doc = json.loads((event_dir / "anchor.json").read_text(encoding="utf-8"))
        state = cls(
            event_id=anchor_doc["event_id"],
            photo_ids=tuple(anchor_doc["photo_ids"]),
            anchor=GeoLocation.from_dict(anchor_doc["location"]),
            anchor_source=anchor_doc["source"],
        )
        state.scene = validate_scene_description(
            (event_dir / "scene_description.json").read_text(encoding="utf-8"), state.photo_ids
        )
        for sub, target in (("masks", state.masks), ("annotations", state.canvases)):
            for p in sorted((event_dir / sub).glob("*.png")) if (event_dir / sub).is_dir() else []:
                target[p.stem] = p.read_bytes()
        gen_dir = event_dir / "generated"
        if gen_dir.is_dir():
            for p in sorted(gen_dir.iterdir()):
                state.generated[p.stem] = (p.suffix.lstrip("."), p.read_bytes())
        marks_dir = event_dir / "marks"
        if marks_dir.is_dir():
            for p in sorted(marks_dir.glob("*.json")):
                state.placements[p.stem] = PlacementRecord.from_dict(json.loads(p.read_text(encoding="utf-8")))
        req = event_dir / "requests.json"
        if req.is_file():
            state.digests = {k: list(v) for k, v in json.loads(req.read_text(encoding="utf-8")).items()}
        return state


def _pool_map(fn, items, workers: int):
    """Map in parallel but return results in input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _new_digests(store: providers.FixtureStore, before: set[str]) -> list[str]:
    return sorted(set(store.consumed_digests) - before)


# phase 1 ---------------------------------------------------------------------

def analyze_photos(
    collection: PhotoCollection, store: providers.FixtureStore, config: PipelineConfig
) -> tuple[EventState, StageLog]:
    rec = _Recorder(PHOTO_ANALYSIS, config.manual_flags)
    state = EventState(event_id=collection.event_id, photo_ids=tuple(collection.ids))
    before = set(store.consumed_digests)

    def work():
        located = collection.exif_locations()
        if located:
            state.anchor, state.anchor_source = aggregate_locations(located), "exif"
        else:
            state.anchor, state.anchor_source = providers.estimate_location(collection.photos, store), "estimate"

        def segment(photo):
            return photo.id, store.dispatch(providers.segmentation_request(photo, config.segmentation_prompt)).payload

        state.masks = dict(_pool_map(segment, list(collection.photos), config.max_parallel_requests))
        masks = {pid: providers.Attachment.from_bytes(b) for pid, b in state.masks.items()}
        metadata = {
            "capture_times": {
                p.id: p.capture_time.isoformat() for p in collection.photos if p.capture_time is not None
            },
            "location": state.anchor.to_dict(),
            "location_source": state.anchor_source,
        }
        req = providers.scene_analysis_request(collection.photos, masks, metadata)
        state.scene = providers.dispatch_json(
            req, store, lambda doc: validate_scene_description(doc, collection.ids)
        )

    rec.run(collection.event_id, work)
    state.digests[PHOTO_ANALYSIS] = _new_digests(store, before)
    return state, rec.close()


# phase 2 ---------------------------------------------------------------------

def _photos_for(collection: PhotoCollection, ids) -> list:
    wanted = set(ids)
    chosen = [p for p in collection.photos if p.id in wanted]
    return chosen or list(collection.photos)


def generation_jobs(scene: SceneDescription) -> list[tuple[str, str]]:
    """``(element_id, job kind)`` for every element that needs a generated asset."""
    jobs = [(eid, "mesh") for eid in scene.objects]
    jobs += [(eid, "mesh") for eid, h in scene.humans.items() if h.count_type == "individual"]
    jobs += [(eid, "geo_texture") for eid, g in scene.geography.items() if g.type in ("snowfield", "grass", "beach")]
    jobs += [(eid, "particle_texture") for eid in textured_particles(scene)]
    return sorted(jobs)


def generate_elements(
    state: EventState, collection: PhotoCollection, store: providers.FixtureStore, config: PipelineConfig
) -> StageLog:
    rec = _Recorder(ELEMENT_GENERATION, config.manual_flags)
    scene = state.scene
    masks = {pid: providers.Attachment.from_bytes(b) for pid, b in state.masks.items()}
    summary = scene.event_summary.overall_description
    before = set(store.consumed_digests)

    def build(eid: str, kind: str) -> providers.ProviderRequest:
        if kind == "mesh":
            cue = scene.objects.get(eid) or scene.humans[eid]
            return providers.asset_request(eid, _photos_for(collection, cue.images), masks)
        if kind == "geo_texture":
            cue = scene.geography[eid]
            return providers.geo_texture_request(eid, summary, cue.type, cue.description)
        cue = scene.particles[eid]
        return providers.particle_texture_request(eid, summary, cue.type, cue.description)

    def job(item):
        eid, kind = item

        def work():
            payload = store.dispatch(build(eid, kind)).payload
            if not payload:
                raise MalformedPayload(f"{eid}: empty payload")
            return ("glb" if kind == "mesh" else "png"), payload

        return eid, rec.run(eid, work)

    for eid, result in _pool_map(job, generation_jobs(scene), config.max_parallel_requests):
        if result is not None:
            state.generated[eid] = result
    state.digests[ELEMENT_GENERATION] = _new_digests(store, before)
    return rec.close()


# phase 3 ---------------------------------------------------------------------

@dataclass(frozen=True)
class PlacementJob:
    element_id: str
    role: str
    template: str
    object_text: str
    photo_ids: tuple[str, ...]


def placement_jobs(state: EventState, config: PipelineConfig) -> list[PlacementJob]:
    scene = state.scene
    jobs = []
    for eid, cue in scene.objects.items():
        if eid in state.generated:
            jobs.append(PlacementJob(eid, "object", object_template(cue, config.verb_table), cue.label, cue.images))
    for eid, cue in scene.humans.items():
        if cue.count_type == "group":
            jobs.append(PlacementJob(eid, "pedestrians", AREA, cue.description, cue.images))
        elif eid in state.generated:
            template = human_template(cue)
            role = "pedestrians" if template == AREA else "human"
            jobs.append(PlacementJob(eid, role, template, cue.description, cue.images))
    for eid, cue in scene.geography.items():
        if cue.type in ("ocean", "river"):
            jobs.append(PlacementJob(eid, "water", AREA, cue.type, cue.images))
    for eid, cue in scene.lighting.items():
        if cue.type == "streetlight":
            jobs.append(PlacementJob(eid, "streetlight", POSITION, "streetlight", cue.images))
    return sorted(jobs, key=lambda j: j.element_id)


def base_map_for(terrain: TerrainModel, camera: OrthoCameraSpec) -> np.ndarray:
    return render_base_map(terrain, camera)


def place_elements(
    state: EventState,
    store: providers.FixtureStore,
    config: PipelineConfig,
    terrain: TerrainModel,
    stock: StockCatalog,
) -> StageLog:
    rec = _Recorder(PLACEMENT_ROUTE, config.manual_flags)
    camera = config.camera
    base = base_map_for(terrain, camera)
    base_att = providers.Attachment.from_raster(base)
    masks = {pid: providers.Attachment.from_bytes(b) for pid, b in state.masks.items()}
    scene = state.scene
    before = set(store.consumed_digests)
    canvases: dict[str, bytes] = {}
    lock = threading.Lock()

    def extract(canvas: AnnotatedCanvas):
        if canvas.template == ROUTE:
            return extract_route(canvas, config.waypoint_count)
        if canvas.template == AREA:
            return extract_area(canvas)
        return extract_position(canvas)

    def place(job: PlacementJob, points: tuple[WorldPoint, ...]) -> tuple[PlacedElement, ...]:
        eid = job.element_id
        mark = ProjectedMark(job.template, points)
        mesh = state.generated.get(eid, (None, None))[1]
        if job.role == "object":
            placed = (place_object(eid, scene.objects[eid], mark, mesh, config.verb_table),)
        elif job.role == "human":
            if job.template == ROUTE:
                placed = (route_humans(eid, scene.humans[eid], mark, mesh),)
            else:
                placed = (place_static_human(eid, mark, mesh),)
        elif job.role == "pedestrians":
            cue = scene.humans[eid]
            pfield = PedestrianField(
                eid, points, config.group_density, config.seed, clip_weights_for(cue.animation),
                individual=cue.count_type == "individual",
            )
            placed = tuple(spawn_pedestrians(pfield, stock, terrain))
        else:
            placed = ()
        for element in placed:
            if not element.in_frame(camera):
                raise OutOfFrame(f"{element.element_id}: placement leaves the camera frame")
        return placed

    def job_fn(job: PlacementJob):
        refs = [masks[p] for p in job.photo_ids if p in masks]
        req = providers.annotation_request(job.element_id, job.template, job.object_text, base_att, refs)

        def work():
            score, canvas, payload = 0.0, None, b""
            # one re-request when the painter returns a misaligned canvas
            for _ in range(2):
                payload = store.dispatch(req).payload
                with lock:
                    canvases[job.element_id] = payload
                image = providers.decode_image(payload)
                if image.shape[:2] != base.shape[:2]:
                    score = 0.0
                    continue
                canvas = AnnotatedCanvas(image, job.element_id, job.template, base)
                score = verify_canvas_alignment(canvas)
                if score >= ALIGNMENT_THRESHOLD:
                    break
            if canvas is None or score < ALIGNMENT_THRESHOLD:
                raise AlignmentRejected(f"{job.element_id}: canvas alignment {score:.3f} < {ALIGNMENT_THRESHOLD}")
            mark = extract(canvas)
            projected = project_annotation(mark, camera, terrain)
            points = (projected,) if isinstance(projected, WorldPoint) else tuple(projected)
            # keep exactly what the intermediate files hold, so a split run rebuilds the same splines
            points = tuple(WorldPoint(*(canonical.quantize(c) for c in p.to_list())) for p in points)
            for p in points:
                if not camera.contains_ground(p.east, p.north):
                    raise OutOfFrame(f"{job.element_id}: projected point outside the frame")
            return PlacementRecord(
                job.element_id, job.role, job.template, round(score, 6), mark.to_dict(), points, place(job, points)
            )

        return job.element_id, rec.run(job.element_id, work)

    for eid, result in _pool_map(job_fn, placement_jobs(state, config), config.max_parallel_requests):
        if result is not None:
            state.placements[eid] = result
    state.canvases.update(canvases)
    state.digests[PLACEMENT_ROUTE] = _new_digests(store, before)
    return rec.close()


# composition -----------------------------------------------------------------

def compose_event(
    state: EventState, config: PipelineConfig, terrain: TerrainModel, stock: StockCatalog
) -> SceneManifest:
    scene = state.scene
    recs = state.placements
    elements, pedestrians = [], []
    files: dict[str, bytes] = {}
    for eid in sorted(recs):
        rec = recs[eid]
        for e in rec.placed:
            (pedestrians if rec.role == "pedestrians" else elements).append(e)
    for e in elements:
        files[e.asset] = state.generated[e.element_id][1]
    figures = {stock.asset_ref(f): f for f in stock.figures}
    for p in pedestrians:
        files[p.asset] = stock.file_bytes(figures[p.asset])

    textures = {}
    for eid, (ext, data) in state.generated.items():
        if ext == "png":
            ref = f"assets/{eid}.png"
            textures[eid] = ref
            files[ref] = data

    water_ok = {eid: list(r.points) for eid, r in recs.items() if r.role == "water"}
    geo_scene = SceneDescription(
        scene.event_summary, scene.objects, scene.humans,
        {eid: c for eid, c in scene.geography.items() if c.type not in ("ocean", "river") or eid in water_ok},
        scene.lighting, scene.particles,
    )
    geography = compose_geography(geo_scene, water_ok, textures)
    streetlights = [recs[eid].points[0] for eid in sorted(recs) if recs[eid].role == "streetlight"]
    lighting = configure_lighting(scene, streetlights, config.sun_table)
    particle_textures = [
        ParticleTexture(eid, scene.particles[eid].type, textures[eid])
        for eid in textured_particles(scene) if eid in textures
    ]
    digests = sorted({d for ds in state.digests.values() for d in ds})
    return compose_manifest(
        event_id=state.event_id,
        anchor=state.anchor,
        camera=config.camera,
        terrain=terrain,
        elements=elements,
        pedestrians=pedestrians,
        particles=configure_particles(scene),
        particle_textures=particle_textures,
        lighting=lighting,
        geography=geography,
        provenance=Provenance(state.photo_ids, tuple(digests), config.seed),
        files=files,
        diorama_scale=config.diorama_scale,
    )


# entry points ----------------------------------------------------------------

def load_terrain(config: PipelineConfig) -> TerrainModel:
    if config.terrain is None:
        return TerrainModel.flat(0.0, max(config.camera.extent_east, config.camera.extent_north))
    return TerrainModel.load(config.terrain)


def make_store(config: PipelineConfig, transport: providers.Transport | None = None) -> providers.FixtureStore:
    if transport is None and config.mode != "replay":
        transport = providers.HttpTransport(config.endpoints)
    return providers.FixtureStore(
        config.fixtures_dir, config.mode, transport, max_in_flight=config.max_parallel_requests
    )


@dataclass
class RunResult:
    manifest: SceneManifest | None
    log: RunLog
    event_dir: Path | None
    log_path: Path | None = None


def run_pipeline(
    input_dir: str | Path,
    out_dir: str | Path,
    config: PipelineConfig,
    transport: providers.Transport | None = None,
    runs_dir: str | Path | None = None,
    stock: StockCatalog | None = None,
) -> RunResult:
    """Run every phase and emit ``<out_dir>/<event_id>/`` in one atomic swap.

    Per-element failures are logged and skipped. A run with no usable scene
    description raises :class:`PipelineFailure` after saving its log.
    """
    t0 = time.perf_counter()
    store = make_store(config, transport)
    stock = stock or StockCatalog.load()
    collection = load_collection(input_dir, config.event_id, config.max_parallel_requests)
    log = RunLog(collection.event_id, config.seed, config.mode)

    def finish() -> Path | None:
        log.end_to_end_s = round(time.perf_counter() - t0, 6)
        return log.save(runs_dir) if runs_dir is not None else None

    state, stage = analyze_photos(collection, store, config)
    log.stages.append(stage)
    if state.scene is None:
        finish()
        raise PipelineFailure(f"{collection.event_id}: photo analysis produced no valid scene description", log) from None

    log.stages.append(generate_elements(state, collection, store, config))
    terrain = load_terrain(config)
    log.stages.append(place_elements(state, store, config, terrain, stock))

    manifest = compose_event(state, config, terrain, stock)
    emit(manifest, out_dir, state.to_files())
    return RunResult(manifest, log, Path(out_dir) / manifest.event_id, finish())
