import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from common.errors import ConfigError
from common.logger_config import get_logger

logger = get_logger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseModel)


class ModelConfig(BaseModel):
    """Dimensions and structure of the captioner. Defaults are desk scale."""
    model_config = ConfigDict(extra="forbid")

    d_app: int = Field(32, gt=0)
    d_ft: int = Field(16, gt=0)
    d_phoc: int = Field(16, gt=0)
    d_model: int = Field(64, gt=0)
    n_heads: int = Field(4, gt=0)
    ffn_dim: int = Field(128, gt=0)
    fusion_layers: int = Field(2, ge=0)
    visual_layers: int = Field(2, ge=0)
    text_layers: int = Field(2, ge=0)
    graph_layers: int = Field(1, ge=1)
    max_objects: int = Field(10, gt=0)
    max_tokens: int = Field(8, gt=0)
    max_caption_len: int = Field(30, gt=0)
    strategy: Literal["sequence", "independent", "multiple"] = "sequence"
    threshold: float = Field(0.5, gt=0.0, lt=1.0)
    precision: Literal["float32", "float64"] = "float32"

    @model_validator(mode="after")
    def _heads_divide_model_dim(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        return self


class TrainConfig(ModelConfig):
    batch_size: int = Field(8, gt=0)
    iterations: int = Field(2000, gt=0)
    learning_rate: float = Field(2e-4, ge=0.0)
    seed: int = 0
    alpha: float = Field(1.0, ge=0.0)
    beta: float = Field(1.0, ge=0.0)
    eta: float = Field(1.0, ge=0.0)
    checkpoint_every: int = Field(500, gt=0)
    log_every: int = Field(100, gt=0)
    use_predicted_acg: bool = False
    anchor_loss: Literal["bce", "categorical"] = "bce"
    min_freq: int = Field(1, ge=1)
    data: Optional[str] = None
    synth_scenes: int = Field(32, gt=0)


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_scenes: int = 32
    objects_per_scene: int = Field(4, ge=1)
    tokens_per_scene: int = Field(6, ge=1)
    refs_per_scene: int = Field(5, ge=1)
    max_partners: int = Field(2, ge=0)
    d_app: int = Field(32, gt=0)
    d_ft: int = Field(16, gt=0)
    d_phoc: int = Field(16, gt=0)
    max_objects: int = Field(10, gt=0)
    max_tokens: int = Field(8, gt=0)
    object_words: List[str] = [
        "sign", "bottle", "bus", "shirt", "building", "book", "can", "store", "car", "poster", "airplane", "umbrella",
    ]
    ocr_words: List[str] = [
        "stop", "exit", "coca", "pepsi", "open", "sale", "taxi", "hotel", "police", "pizza", "cafe", "bank",
        "delta", "nike", "adidas", "metro", "school", "fire", "jazz", "ahead", "london", "paris", "oak", "rio",
    ]


PRESETS: Dict[str, Dict[str, Any]] = {
    "desk": {},
    "tiny": {
        "d_model": 8, "n_heads": 1, "ffn_dim": 16, "fusion_layers": 1, "visual_layers": 1, "text_layers": 1,
        "max_objects": 3, "max_tokens": 3, "max_caption_len": 5, "precision": "float64",
        "d_app": 4, "d_ft": 3, "d_phoc": 3,
    },
    "full": {
        "d_model": 768, "n_heads": 12, "ffn_dim": 3072, "fusion_layers": 2, "visual_layers": 4, "text_layers": 4,
        "graph_layers": 4, "max_objects": 100, "max_tokens": 50, "max_caption_len": 30,
        "d_app": 2048, "d_ft": 300, "d_phoc": 604,
    },
}


def _coerce(raw: str) -> Any:
    """Parses a `key=value` right-hand side into a JSON scalar when possible"""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_config_file(path: str | Path) -> Dict[str, Any]:
    """Reads a JSON object or flat key=value file into a dict"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            values = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return values

    values = {}
    for number, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        values[key.strip()] = _coerce(raw.strip())
    return values


def resolve_config(
        config_cls: Type[ConfigT],
        preset: str = "desk",
        file_values: Optional[Dict[str, Any]] = None,
        cli_values: Optional[Dict[str, Any]] = None,
) -> ConfigT:
    """
    Merges built-in preset < config file < CLI flags and validates the result.
    Keys unknown to `config_cls` are rejected.
    """
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}, expected one of {sorted(PRESETS)}")
    fields = config_cls.model_fields
    merged = {k: v for k, v in PRESETS[preset].items() if k in fields}
    merged.update(file_values or {})
    merged.update({k: v for k, v in (cli_values or {}).items() if v is not None})
    try:
        config = config_cls.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(str(e)) from e
    logger.debug(f"resolved {config_cls.__name__}: {config.model_dump()}")
    return config
