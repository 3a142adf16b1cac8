import json

import pytest

from common.config import SynthConfig
from common.errors import SceneParseError, SceneValidationError
from data_prep.scene_io import SceneDims, load_scenes, validate_scene, write_scenes
from data_prep.synthetic import generate_synthetic
from tests.factories import make_scene, tiny_config


@pytest.fixture
def config():
    return tiny_config()


@pytest.fixture
def dims(config):
    return SceneDims(d_app=config.d_app, d_ft=config.d_ft, d_phoc=config.d_phoc,
                     max_objects=config.max_objects, max_tokens=config.max_tokens)


def _write(path, header, scenes):
    lines = [json.dumps({"dims": header.model_dump(), "seed": None})]
    lines += [json.dumps(s.model_dump(by_alias=True)) if not isinstance(s, str) else s for s in scenes]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_write_then_load_keeps_scenes(tmp_path):
    manifest = generate_synthetic(SynthConfig(n_scenes=3), seed=1)
    path = tmp_path / "scenes.jsonl"
    write_scenes(manifest, path)
    loaded = load_scenes(path)
    assert loaded.model_dump() == manifest.model_dump()
    assert [s.id for s in loaded.scenes] == [s.id for s in manifest.scenes]


def test_empty_file_gives_empty_dataset(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_scenes(path).scenes == []


def test_byte_order_mark_is_ignored(tmp_path, config, dims):
    path = tmp_path / "bom.jsonl"
    _write(path, dims, [make_scene(config)])
    path.write_text("\ufeff" + path.read_text(encoding="utf-8"), encoding="utf-8")
    assert len(load_scenes(path).scenes) == 1


def test_missing_header_is_a_parse_error(tmp_path, config):
    path = tmp_path / "no_header.jsonl"
    path.write_text(json.dumps(make_scene(config).model_dump(by_alias=True)) + "\n", encoding="utf-8")
    with pytest.raises(SceneParseError) as info:
        load_scenes(path)
    assert info.value.line_number == 1


def test_malformed_line_reports_its_number(tmp_path, config, dims):
    path = tmp_path / "bad.jsonl"
    _write(path, dims, [make_scene(config), "{not json"])
    with pytest.raises(SceneParseError) as info:
        load_scenes(path)
    assert info.value.line_number == 3


def test_schema_mismatch_is_a_parse_error(tmp_path, dims):
    path = tmp_path / "schema.jsonl"
    _write(path, dims, [json.dumps({"id": "x", "objects": [{"bbox": [0, 0, 1, 1]}]})])
    with pytest.raises(SceneParseError):
        load_scenes(path)


def test_inverted_bbox_names_scene_and_field(tmp_path, config, dims):
    scene = make_scene(config, bboxes=[(0.5, 0.1, 0.2, 0.3), (0.1, 0.1, 0.2, 0.2)], scene_id="broken")
    path = tmp_path / "bbox.jsonl"
    _write(path, dims, [scene])
    with pytest.raises(SceneValidationError) as info:
        load_scenes(path)
    assert info.value.scene_id == "broken"
    assert any("ocr[0].bbox" in v and "x1 > x2" in v for v in info.value.violations)


def test_duplicate_ids_are_rejected(tmp_path, config, dims):
    path = tmp_path / "dupes.jsonl"
    _write(path, dims, [make_scene(config, scene_id="a"), make_scene(config, scene_id="a")])
    with pytest.raises(SceneValidationError):
        load_scenes(path)


def test_validate_scene_lists_every_violation(config, dims):
    scene = make_scene(config, confidences=[1.5, 0.5])
    scene.ocr_tokens[1].word_emb = [0.0]
    scene.visual_objects[0].bbox = [0.0, 0.0, 1.2, 0.5]
    violations = validate_scene(scene, dims)
    assert any(v.startswith("ocr[0].conf") for v in violations)
    assert any(v.startswith("ocr[1].word_emb") for v in violations)
    assert any(v.startswith("objects[0].bbox") for v in violations)


def test_token_cap_is_enforced(config, dims):
    scene = make_scene(config, texts=("a1", "b2", "c3", "d4"))
    assert any(v.startswith("ocr:") for v in validate_scene(scene, dims))


def test_well_formed_scene_has_no_violations(config, dims):
    assert validate_scene(make_scene(config), dims) == []
