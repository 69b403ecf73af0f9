import json
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diorama_forge import canonical, model
from diorama_forge.errors import SchemaViolation
from diorama_forge.model import (
    EFFECT_INTENSITIES,
    EFFECTS,
    GeoLocation,
    ParticleEffectConfig,
    ParticleRuleWarning,
    normalize_particle_config,
    validate_scene_description,
)

from conftest import DATA

SCHEMA = DATA / "schema"
INDEX = json.loads((SCHEMA / "index.json").read_text())
VALID = sorted(k for k, v in INDEX.items() if v["valid"])

# (layer, element, field) for every enum-typed field in the full fixture
ENUM_FIELDS = [
    ("event_summary", None, "environment"),
    ("event_summary", None, "time_of_day"),
    ("event_summary", None, "weather"),
    ("objects", "car", "size"),
    ("humans", "crowd", "count_type"),
    ("geography", "ocean", "type"),
    ("geography", "ocean", "dynamic_state"),
    ("lighting", "lamp", "type"),
    ("lighting", "lamp", "intensity"),
    ("particles", "haze", "type"),
    ("particles", "haze", "intensity"),
]


def load(name):
    return json.loads((SCHEMA / f"{name}.json").read_text())


def effects_doc(**overrides):
    doc = {"effects": {e: {"enabled": False, "intensity": "low"} for e in EFFECTS}}
    for k, v in overrides.items():
        doc["effects"][k] = v
    return doc


def test_empty_layers_is_valid_with_zero_elements():
    scene = validate_scene_description(load("valid_01_empty_layers"))
    assert scene.element_count == 0


def test_huge_size_reports_field_path():
    doc = load("valid_02_full_scene")
    doc["objects"]["object01"] = dict(doc["objects"]["car"], size="huge")
    with pytest.raises(SchemaViolation) as err:
        validate_scene_description(doc)
    assert err.value.path == "objects.object01.size"


def test_confidence_above_one_rejected():
    doc = load("valid_02_full_scene")
    doc["objects"]["car"]["confidence"] = 1.5
    with pytest.raises(SchemaViolation, match="confidence"):
        validate_scene_description(doc)


def test_all_errors_collected():
    doc = load("valid_02_full_scene")
    doc["objects"]["car"]["size"] = "huge"
    doc["humans"]["crowd"]["count_type"] = "mob"
    with pytest.raises(SchemaViolation) as err:
        validate_scene_description(doc)
    paths = {p for p, _ in err.value.violations}
    assert {"objects.car.size", "humans.crowd.count_type"} <= paths


def test_unknown_photo_id_rejected():
    doc = load("valid_02_full_scene")
    with pytest.raises(SchemaViolation) as err:
        validate_scene_description(doc, photo_ids=["IMG_0001"])
    assert any("unknown photo id" in r for _, r in err.value.violations)


def test_json_text_accepted_and_bad_json_rejected():
    text = (SCHEMA / "valid_03_objects_only.json").read_text()
    assert validate_scene_description(text).objects
    with pytest.raises(SchemaViolation):
        validate_scene_description("{not json")


@pytest.mark.parametrize("name", VALID)
def test_round_trip(name):
    first = validate_scene_description(load(name))
    again = validate_scene_description(json.loads(first.to_json()))
    assert again == first


@pytest.mark.parametrize("layer,eid,field", ENUM_FIELDS)
@settings(max_examples=15, deadline=None)
@given(bad=st.text(min_size=1, max_size=12))
def test_out_of_enum_rejected_with_path(layer, eid, field, bad):
    doc = load("valid_02_full_scene")
    target = doc[layer] if eid is None else doc[layer][eid]
    allowed = {
        "environment": model.ENVIRONMENTS, "time_of_day": model.TIMES_OF_DAY, "weather": model.WEATHERS,
        "size": model.SIZES, "count_type": model.COUNT_TYPES, "dynamic_state": model.DYNAMIC_STATES,
        "intensity": model.INTENSITIES,
        "type": {"geography": model.GEO_TYPES, "lighting": model.LIGHT_TYPES, "particles": model.PARTICLE_TYPES}.get(layer),
    }[field]
    if bad in allowed:
        return
    target[field] = bad
    path = f"{layer}.{field}" if eid is None else f"{layer}.{eid}.{field}"
    with pytest.raises(SchemaViolation) as err:
        validate_scene_description(doc)
    assert path in {p for p, _ in err.value.violations}


def test_geolocation_ranges():
    with pytest.raises(ValueError):
        GeoLocation(91.0, 0.0)
    with pytest.raises(ValueError):
        GeoLocation(0.0, float("nan"))
    assert GeoLocation(-90, 180, 5).altitude == 5.0


def test_particle_all_disabled_identity():
    out = normalize_particle_config(effects_doc())
    assert [(c.effect, c.enabled, c.intensity) for c in out] == [(e, False, "low") for e in EFFECTS]


def test_particle_multiple_enabled_preserved():
    out = normalize_particle_config(effects_doc(
        snow={"enabled": True, "intensity": "high"}, fog={"enabled": True, "intensity": "low"}
    ))
    got = {c.effect: (c.enabled, c.intensity) for c in out}
    assert got["snow"] == (True, "high")
    assert got["fog"] == (True, "low")


def test_particle_disabled_high_coerced_with_warning():
    with pytest.warns(ParticleRuleWarning):
        out = normalize_particle_config(effects_doc(rain={"enabled": False, "intensity": "high"}))
    rain = next(c for c in out if c.effect == "rain")
    assert (rain.enabled, rain.intensity) == (False, "low")


def test_particle_missing_effect_rejected():
    doc = effects_doc()
    del doc["effects"]["cloud"]
    with pytest.raises(SchemaViolation, match="effects.cloud"):
        normalize_particle_config(doc)


def test_effect_config_invariant_enforced():
    with pytest.raises(ValueError):
        ParticleEffectConfig("rain", False, "high")


entries = st.fixed_dictionaries({"enabled": st.booleans(), "intensity": st.sampled_from(EFFECT_INTENSITIES)})


@given(st.fixed_dictionaries({e: entries for e in EFFECTS}))
def test_particle_rule_property(effects):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = normalize_particle_config({"effects": effects})
    violated = sum(1 for v in effects.values() if not v["enabled"] and v["intensity"] != "low")
    assert sum(issubclass(w.category, ParticleRuleWarning) for w in caught) == violated
    for cfg in out:
        assert cfg.enabled or cfg.intensity == "low"


@given(st.floats(allow_nan=False, allow_infinity=False, min_value=-1e9, max_value=1e9))
def test_canonical_float_six_decimals(x):
    text = canonical.dumps({"v": x})
    digits = text.split(":")[1].rstrip("}")
    assert len(digits.split(".")[1]) == 6
    assert not digits.startswith("-0.000000")
