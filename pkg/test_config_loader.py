"""
Tests for reading and validating chain documents
"""
import json
import os

import pytest

from utils.chain_model import build_chain
from utils.config_loader import ConfigLoader, analysis_defaults, load_config
from utils.errors import ConfigError, ParseError, SchemaError

SCENARIOS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "scenarios")


def write_doc(tmp_path, doc, name="chain.json"):
    path = os.path.join(str(tmp_path), name)
    with open(path, "w", encoding="utf-8") as handle:
        if isinstance(doc, str):
            handle.write(doc)
        else:
            json.dump(doc, handle)
    return path


def minimal_doc():
    return {
        "segments": [{"length": 1.0, "rho": 1.0, "ei": 1.0}],
        "left_end": {"kind": "clamped"},
        "right_end": {"kind": "free"},
    }


def test_bundled_scenario_loads():
    doc = load_config(os.path.join(SCENARIOS, "chen87_m2.json"))
    assert build_chain(doc).m == 2
    assert analysis_defaults(doc)["cells"] == 200


def test_every_bundled_scenario_builds():
    names = sorted(f for f in os.listdir(SCENARIOS) if f.endswith(".json"))
    assert "rigid_mode.json" in names
    for name in names:
        model = build_chain(load_config(os.path.join(SCENARIOS, name)))
        assert model.name == name[:-5]


def test_junction_kind_out_of_range(tmp_path):
    doc = load_config(os.path.join(SCENARIOS, "chen87_m2.json"))
    doc["junctions"][0]["kind"] = 5
    with pytest.raises(SchemaError) as info:
        load_config(write_doc(tmp_path, doc))
    assert info.value.field == "junctions[0].kind"


def test_boolean_junction_kind_rejected():
    doc = load_config(os.path.join(SCENARIOS, "chen87_m2.json"))
    doc["junctions"][0]["kind"] = True
    with pytest.raises(SchemaError):
        ConfigLoader().validate(doc)


def test_empty_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError) as info:
        load_config(write_doc(tmp_path, ""))
    assert info.value.line == 1


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(os.path.join(str(tmp_path), "absent.json"))
    assert not isinstance(info.value, ParseError)


def test_top_level_must_be_object():
    with pytest.raises(SchemaError):
        ConfigLoader().parse("[1, 2, 3]")


def test_missing_required_field():
    doc = minimal_doc()
    del doc["right_end"]
    with pytest.raises(SchemaError) as info:
        ConfigLoader().validate(doc)
    assert info.value.field == "document.right_end"


def test_unknown_end_kind():
    doc = minimal_doc()
    doc["right_end"]["kind"] = "sliding"
    with pytest.raises(SchemaError):
        ConfigLoader().validate(doc)


def test_unknown_field_strict_and_lenient(tmp_path):
    doc = minimal_doc()
    doc["segments"][0]["colour"] = "red"
    path = write_doc(tmp_path, doc)

    with pytest.raises(SchemaError) as info:
        load_config(path)
    assert info.value.field == "segments[0].colour"

    loader = ConfigLoader(strict=False)
    loaded = loader.load(path)
    assert "colour" not in loaded["segments"][0]
    assert loader.warnings == ["segments[0].colour: unknown field ignored"]


def test_analysis_defaults_missing_block():
    assert analysis_defaults(minimal_doc()) == {}


if __name__ == "__main__":
    import tempfile

    tests = [value for name, value in sorted(globals().items()) if name.startswith("test_") and callable(value)]
    for test in tests:
        try:
            if "tmp_path" in test.__code__.co_varnames[: test.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as tmp:
                    test(tmp)
            else:
                test()
            print(f"✅ {test.__name__}")
        except Exception as e:
            print(f"❌ {test.__name__}: {e}")
