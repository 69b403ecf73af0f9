"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``; the criterion
lines are printed even when output capture is on.
"""

import json
import math
import re
import shutil
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from diorama_forge import cli
from diorama_forge.annotate import (
    POSITION,
    AnnotatedCanvas,
    PositionMark,
    extract_area,
    extract_position,
    extract_route,
    verify_canvas_alignment,
)
from diorama_forge.config import load_config
from diorama_forge.errors import SchemaViolation
from diorama_forge.geometry import (
    OrthoCameraSpec,
    TerrainModel,
    WorldPoint,
    build_spline,
    ground_to_pixel,
    pixel_to_ground,
    project_annotation,
    render_base_map,
)
from diorama_forge.manifest import emit, load_manifest
from diorama_forge.model import EFFECT_INTENSITIES, EFFECTS, ParticleRuleWarning, normalize_particle_config, validate_scene_description
from diorama_forge.pipeline import run_pipeline
from diorama_forge.synthetic import FailingTransport, noise_canvas, paint_mark

from canvases import area_cases, base_map, point_to_polyline, polygon_iou, position_cases, route_cases
from conftest import DATA, DEMO, REFERENCE_CORPUS
from manifests import random_manifest


@pytest.fixture
def verdict(capsys):
    def emit_line(number: int, title: str, ok: bool, detail: str = ""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title}" + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {number} failed: {detail}"

    return emit_line


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# 1 ---------------------------------------------------------------------------

def test_criterion_01_schema_suite(verdict):
    schema = DATA / "schema"
    index = json.loads((schema / "index.json").read_text())
    docs = {name: (schema / f"{name}.json").read_text() for name in index}
    t0 = time.perf_counter()
    correct = 0
    for name, doc in docs.items():
        expect_valid = index[name]["valid"]
        try:
            validate_scene_description(doc)
            got_valid = True
        except SchemaViolation:
            got_valid = False
        correct += got_valid == expect_valid
    elapsed = time.perf_counter() - t0
    n_valid = sum(v["valid"] for v in index.values())
    ok = len(docs) >= 20 and n_valid >= 10 and len(docs) - n_valid >= 10 and correct == len(docs) and elapsed < 1.0
    verdict(1, "schema suite", ok, f"{correct}/{len(docs)} classified, {elapsed * 1000:.0f} ms")


# 2 ---------------------------------------------------------------------------

def test_criterion_02_particle_rule(verdict):
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(1000):
        effects = {
            e: {"enabled": bool(rng.random() < 0.5), "intensity": EFFECT_INTENSITIES[int(rng.integers(3))]}
            for e in EFFECTS
        }
        violations = sum(1 for v in effects.values() if not v["enabled"] and v["intensity"] != "low")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            out = normalize_particle_config({"effects": effects})
        warned = sum(issubclass(w.category, ParticleRuleWarning) for w in caught)
        rule_holds = all(c.enabled or c.intensity == "low" for c in out)
        kept = all(c.enabled == effects[c.effect]["enabled"] for c in out)
        if warned != violations or not rule_holds or not kept:
            bad += 1
    verdict(2, "particle rule", bad == 0, f"{1000 - bad}/1000 documents")


# 3 ---------------------------------------------------------------------------

def test_criterion_03_projection_oracle(verdict):
    cam = OrthoCameraSpec()
    coords = -100.0 + 10.0 * np.arange(21)
    ee, nn = np.meshgrid(coords, coords)
    a, b, c = 0.031, -0.017, 4.25
    terrains = {
        "flat": (TerrainModel(np.full(ee.shape, 3.5), -100.0, -100.0, 10.0), lambda e, n: 3.5),
        "planar": (TerrainModel(a * ee + b * nn + c, -100.0, -100.0, 10.0), lambda e, n: a * e + b * n + c),
    }
    us = np.linspace(0.0, cam.image_width, 100)
    vs = np.linspace(0.0, cam.image_height, 100)
    max_px = max_h = 0.0
    for terrain, plane in terrains.values():
        for u in us:
            for v in vs:
                p = project_annotation(PositionMark((float(u), float(v))), cam, terrain)
                bu, bv = ground_to_pixel(p.east, p.north, cam)
                max_px = max(max_px, abs(bu - u), abs(bv - v))
                max_h = max(max_h, abs(p.up - plane(p.east, p.north)))
                e2, n2 = pixel_to_ground(bu, bv, cam)
                mx, my = cam.meters_per_pixel
                max_px = max(max_px, abs(e2 - p.east) / mx, abs(n2 - p.north) / my)
    ok = max_px < 1e-9 and max_h < 1e-9
    verdict(3, "projection oracle", ok, f"2 x 10000 points, max {max_px:.2e} px, max height error {max_h:.2e} m")


# 4 ---------------------------------------------------------------------------

def _route_ok(mark, path) -> tuple[bool, str]:
    start_err = math.hypot(mark.start[0] - path[0][0], mark.start[1] - path[0][1])
    if start_err > 2.0:
        return False, f"start off by {start_err:.2f} px"
    along = []
    for w in mark.waypoints:
        d, s = point_to_polyline(np.asarray(w, float), path)
        if d > 3.0:
            return False, f"waypoint off path by {d:.2f} px"
        along.append(s)
    if any(b < a - 1e-6 for a, b in zip(along, along[1:])):
        return False, "waypoints out of order"
    return True, ""


def test_criterion_04_annotation_golden_suite(verdict):
    base = base_map(2048)
    groups = {"position": position_cases(base), "area": area_cases(base), "route": route_cases(base)}
    extractors = {"position": extract_position, "area": extract_area, "route": extract_route}
    failures = []
    t0 = time.perf_counter()
    for group, cases in groups.items():
        for case in cases:
            try:
                mark = extractors[group](case.canvas)
            except Exception as exc:  # noqa: BLE001 - compared against the expected class
                if case.error is None or not isinstance(exc, case.error):
                    failures.append(f"{case.name}: raised {type(exc).__name__}")
                continue
            if case.error is not None:
                failures.append(f"{case.name}: expected {case.error.__name__}")
            elif group == "position":
                tx, ty = case.truth["centroid"]
                if math.hypot(mark.pixel[0] - tx, mark.pixel[1] - ty) > 1.0:
                    failures.append(f"{case.name}: centroid off")
            elif group == "area":
                iou = polygon_iou(mark.polygon, case.truth["polygon"], base.shape)
                if iou < 0.95:
                    failures.append(f"{case.name}: IoU {iou:.3f}")
            else:
                ok, why = _route_ok(mark, case.truth["path"])
                if not ok:
                    failures.append(f"{case.name}: {why}")
    elapsed = time.perf_counter() - t0
    counts = {g: len(c) for g, c in groups.items()}
    ok = not failures and elapsed < 10.0 and all(n >= 10 for n in counts.values())
    detail = f"{sum(counts.values())} canvases at 2048 px in {elapsed:.1f} s"
    verdict(4, "annotation golden suite", ok, detail + ("; " + "; ".join(failures) if failures else ""))


# 5 ---------------------------------------------------------------------------

def test_criterion_05_alignment(verdict):
    cfg = load_config(DEMO / "config.json")
    base = render_base_map(TerrainModel.load(DEMO / "terrain.json"), cfg.camera)
    spec = {"type": "Position", "pixel": (300.0, 200.0)}

    def score(img):
        return verify_canvas_alignment(AnnotatedCanvas(img, "e", POSITION, base))

    correct = score(paint_mark(base, spec))
    rotated = score(paint_mark(np.ascontiguousarray(base[::-1, ::-1]), spec))
    noise = score(noise_canvas(base.shape, np.random.default_rng(5)))
    ok = correct > 0.95 and rotated < 0.7 and noise < 0.2
    verdict(5, "alignment check", ok, f"correct {correct:.3f}, rotated {rotated:.3f}, noise {noise:.3f}")


# 6 ---------------------------------------------------------------------------

def test_criterion_06_spline(verdict):
    a, b = WorldPoint(1.0, 2.0, 3.0), WorldPoint(7.0, -4.0, 5.0)
    mid_err = float(np.abs(build_spline([a, b]).sample(0.5) - (a.as_array() + b.as_array()) / 2).max())

    line = build_spline([WorldPoint(2.0 * i, 3.0 * i, -1.0 * i) for i in range(4)])
    direction = np.array([2.0, 3.0, -1.0]) / math.sqrt(14.0)
    off_line = 0.0
    for p in line.sample_many(256):
        off_line = max(off_line, float(np.linalg.norm(p - np.dot(p, direction) * direction)))

    arc = [WorldPoint(10 * math.cos(t), 10 * math.sin(t), 0.0) for t in np.linspace(0, math.pi / 2, 4)]
    radial = max(abs(math.hypot(p[0], p[1]) - 10.0) for p in build_spline(arc).sample_many(256))

    ok = mid_err < 1e-9 and off_line < 1e-9 and radial < 0.5
    verdict(6, "spline", ok, f"midpoint {mid_err:.1e}, collinear {off_line:.1e}, quarter circle {radial:.3f} m")


# 7 ---------------------------------------------------------------------------

def test_criterion_07_determinism(verdict, tmp_path, capsys):
    event = tmp_path / "demo_event"
    shutil.copytree(DEMO, event)
    trees = []
    t0 = time.perf_counter()
    for k, parallel in enumerate([1, 1, 8]):
        out = tmp_path / f"out{k}"
        code = cli.main([
            "run", "--input", str(event / "photos"), "--out", str(out), "--config", str(event / "config.json"),
            "--mode", "replay", "--seed", "42", "--max-parallel", str(parallel), "--runs", str(tmp_path / "runs"),
        ])
        assert code == 0
        trees.append(tree_bytes(out))
    capsys.readouterr()
    elapsed = time.perf_counter() - t0
    ok = trees[0] == trees[1] == trees[2] and elapsed < 60.0 and len(trees[0]) > 10
    verdict(7, "determinism", ok, f"3 replay runs (parallel 1, 1, 8), {len(trees[0])} files each, {elapsed:.1f} s")


# 8 ---------------------------------------------------------------------------

TABLE = (
    "Stage                       Time (min)  Count  Success Rate (%)\n"
    "---------------------------------------------------------------\n"
    "Photo Analysis                    0.29   1.00            100.00\n"
    "Element Generation               10.96  10.24             92.58\n"
    "Placement/Route Generation        4.45  11.80             75.25\n"
    "---------------------------------------------------------------\n"
    "End-to-End                       15.70     --                --\n"
)


def test_criterion_08_feasibility_table(verdict, capsys):
    code = cli.main(["report", "--runs", str(REFERENCE_CORPUS)])
    text = capsys.readouterr().out
    verdict(8, "feasibility table format", code == 0 and text == TABLE, "exact text match over 25 runs")


# 9 ---------------------------------------------------------------------------

def test_criterion_09_replay_purity(verdict, tmp_path):
    transport = FailingTransport()
    result = run_pipeline(DEMO / "photos", tmp_path / "out", load_config(DEMO / "config.json"), transport=transport)
    failures = [i for s in result.log.stages for i in s.items if i.outcome != "ok"]
    ok = transport.attempts == 0 and (result.event_dir / "scene.json").is_file() and not failures
    verdict(9, "replay purity", ok, f"{transport.attempts} network attempts")


# 10 --------------------------------------------------------------------------

STRING = re.compile(r'"(?:[^"\\]|\\.)*"')
DECIMAL = re.compile(r'-?\d+\.(\d+)')
EXPONENT = re.compile(r'\d[eE][-+]?\d')


def _keys_sorted(doc) -> bool:
    if isinstance(doc, list):
        return all(_keys_sorted(x) for x in doc)
    if isinstance(doc, dict):
        return list(doc) == sorted(doc) and all(_keys_sorted(v) for v in doc.values())
    return True


def test_criterion_10_manifest_round_trip(verdict):
    bad = []
    floats = 0
    with tempfile.TemporaryDirectory() as tmp:
        for seed in range(50):
            m = random_manifest(seed, event_id=f"evt_{seed:02d}")
            emit(m, tmp)
            event_dir = Path(tmp) / m.event_id
            back = load_manifest(event_dir)
            text = (event_dir / "scene.json").read_text()
            numbers = STRING.sub('""', text)
            decimals = [len(d) for d in DECIMAL.findall(numbers)]
            floats += len(decimals)
            if back != m or back.files != m.files:
                bad.append(f"{seed}: not equal after parse")
            if any(n != 6 for n in decimals) or EXPONENT.search(numbers):
                bad.append(f"{seed}: float formatting")
            if not _keys_sorted(json.loads(text)):
                bad.append(f"{seed}: unsorted keys")
    verdict(10, "manifest round trip", not bad, f"50 manifests, {floats} floats checked" + ("; " + "; ".join(bad) if bad else ""))
