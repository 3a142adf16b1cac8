"""
Checkpoint file: a torch-serialised map

    {"version", "config", "vocab", "model_state", "optimizer_state", "train_state"}

`model_state` maps parameter path -> tensor (shape and values), so save/load is
bit-exact in float64.
"""
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import torch

from common.config import ModelConfig
from common.errors import ConfigError
from common.logger_config import get_logger
from data_prep.vocab import Vocabulary
from model.captioner import AnchorCaptioner

logger = get_logger(__name__)

CHECKPOINT_VERSION = 1


def save_checkpoint(
        path: str | Path,
        model: AnchorCaptioner,
        optimizer: Optional[torch.optim.Optimizer] = None,
        train_state: Optional[Dict[str, Any]] = None,
        train_config: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": ModelConfig.model_validate(
            {k: v for k, v in model.config.model_dump().items() if k in ModelConfig.model_fields}
        ).model_dump(),
        "train_config": train_config,
        "vocab": model.vocab.words,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "train_state": train_state,
    }
    tmp_path = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp_path)
    os.replace(tmp_path, path)
    logger.debug(f"saved checkpoint to {path}")
    return path


def read_checkpoint(path: str | Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    return payload


def load_checkpoint(path: str | Path) -> Tuple[AnchorCaptioner, Dict[str, Any]]:
    """Rebuilds the model from a checkpoint; returns it with the raw payload"""
    payload = read_checkpoint(path)
    model = AnchorCaptioner(ModelConfig.model_validate(payload["config"]), Vocabulary(payload["vocab"]))
    model.load_state_dict(payload["model_state"])
    logger.info(f"loaded checkpoint {path}")
    return model, payload
