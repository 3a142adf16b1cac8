"""
Scene data model and the line-delimited scene file format.

A scene file is UTF-8 JSONL. The first line is the manifest header
`{"dims": {...}, "seed": ...}`, every following line one scene:
`{"id", "objects": [{"app", "bbox"}], "ocr": [{"text", "app", "bbox", "word_emb", "char_emb", "conf"}], "refs"}`.
"""
import json
import math
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from common.errors import SceneParseError, SceneValidationError
from common.logger_config import get_logger
from data_prep.normalize_data import iter_jsonl_lines, write_jsonl

logger = get_logger(__name__)


class VisualObject(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    appearance: List[float] = Field(alias="app")
    bbox: List[float] = Field(description="normalized (x1, y1, x2, y2)")


class OcrToken(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    text: str
    appearance: List[float] = Field(alias="app")
    bbox: List[float]
    word_emb: List[float]
    char_emb: List[float]
    confidence: float = Field(alias="conf")


class Scene(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    id: str
    visual_objects: List[VisualObject] = Field(default_factory=list, alias="objects")
    ocr_tokens: List[OcrToken] = Field(default_factory=list, alias="ocr")
    references: List[str] = Field(default_factory=list, alias="refs")


class SceneDims(BaseModel):
    d_app: int = 32
    d_ft: int = 16
    d_phoc: int = 16
    max_objects: int = 10
    max_tokens: int = 8


class DatasetManifest(BaseModel):
    scenes: List[Scene] = Field(default_factory=list)
    dims: SceneDims = Field(default_factory=SceneDims)
    created_seed: Optional[int] = None

    @property
    def d_app(self) -> int:
        return self.dims.d_app

    @property
    def d_ft(self) -> int:
        return self.dims.d_ft

    @property
    def d_phoc(self) -> int:
        return self.dims.d_phoc


def _bbox_violations(field: str, bbox: List[float]) -> List[str]:
    if len(bbox) != 4:
        return [f"{field}: expected 4 coordinates, got {len(bbox)}"]
    if not all(math.isfinite(v) for v in bbox):
        return [f"{field}: non-finite coordinate"]
    violations = []
    if any(v < 0.0 or v > 1.0 for v in bbox):
        violations.append(f"{field}: coordinates outside [0, 1]")
    x1, y1, x2, y2 = bbox
    if x1 > x2:
        violations.append(f"{field}: x1 > x2")
    if y1 > y2:
        violations.append(f"{field}: y1 > y2")
    return violations


def _vector_violations(field: str, values: List[float], expected: int) -> List[str]:
    if len(values) != expected:
        return [f"{field}: expected length {expected}, got {len(values)}"]
    if not all(math.isfinite(v) for v in values):
        return [f"{field}: non-finite value"]
    return []


def validate_scene(scene: Scene, dims: SceneDims) -> List[str]:
    """Returns every invariant violation of `scene`; empty when well-formed"""
    violations = []
    if not scene.id.strip():
        violations.append("id: empty")
    if len(scene.visual_objects) > dims.max_objects:
        violations.append(f"objects: {len(scene.visual_objects)} exceeds cap {dims.max_objects}")
    if len(scene.ocr_tokens) > dims.max_tokens:
        violations.append(f"ocr: {len(scene.ocr_tokens)} exceeds cap {dims.max_tokens}")

    for i, obj in enumerate(scene.visual_objects):
        violations += _vector_violations(f"objects[{i}].app", obj.appearance, dims.d_app)
        violations += _bbox_violations(f"objects[{i}].bbox", obj.bbox)

    for i, token in enumerate(scene.ocr_tokens):
        if not token.text.strip():
            violations.append(f"ocr[{i}].text: empty")
        violations += _vector_violations(f"ocr[{i}].app", token.appearance, dims.d_app)
        violations += _bbox_violations(f"ocr[{i}].bbox", token.bbox)
        violations += _vector_violations(f"ocr[{i}].word_emb", token.word_emb, dims.d_ft)
        violations += _vector_violations(f"ocr[{i}].char_emb", token.char_emb, dims.d_phoc)
        if not (0.0 <= token.confidence <= 1.0):
            violations.append(f"ocr[{i}].conf: {token.confidence} outside [0, 1]")
    return violations


def load_scenes(path: str | Path) -> DatasetManifest:
    """
    Loads and validates a scene file. Scene order is preserved.
    Raises SceneParseError (with line number) for malformed lines and
    SceneValidationError (with scene id) for invariant violations.
    """
    manifest = DatasetManifest()
    seen_ids = set()
    header_read = False

    for number, line in iter_jsonl_lines(str(path)):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise SceneParseError(number, f"invalid JSON ({e.msg})") from e
        if not isinstance(record, dict):
            raise SceneParseError(number, "expected a JSON object")

        if not header_read:
            if "dims" not in record:
                raise SceneParseError(number, "first line must be the manifest header with 'dims'")
            try:
                manifest.dims = SceneDims.model_validate(record["dims"])
            except ValidationError as e:
                raise SceneParseError(number, f"bad header: {e}") from e
            manifest.created_seed = record.get("seed")
            header_read = True
            continue

        try:
            scene = Scene.model_validate(record)
        except ValidationError as e:
            raise SceneParseError(number, f"record does not match the scene schema: {e}") from e

        violations = validate_scene(scene, manifest.dims)
        if scene.id in seen_ids:
            violations.append("id: duplicate within dataset")
        if violations:
            raise SceneValidationError(scene.id, violations)
        seen_ids.add(scene.id)
        manifest.scenes.append(scene)

    logger.debug(f"loaded {len(manifest.scenes)} scenes from {path}")
    return manifest


def write_scenes(manifest: DatasetManifest, path: str | Path) -> None:
    header = {"dims": manifest.dims.model_dump(), "seed": manifest.created_seed}
    records = [header] + [scene.model_dump(by_alias=True) for scene in manifest.scenes]
    write_jsonl(records, str(path))
    logger.debug(f"wrote {len(manifest.scenes)} scenes to {path}")
