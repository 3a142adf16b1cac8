import hashlib
import random
from pathlib import Path

import numpy as np
import torch

_package_root = Path(__file__).resolve().parents[1]
_source_dirs = ["common", "data_prep", "graph", "model", "training", "inference", "metrics", "ui"]


def torch_dtype(precision: str) -> torch.dtype:
    return torch.float64 if precision == "float64" else torch.float32


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)


def build_id() -> str:
    """Content hash of the package sources, git-style short form"""
    digest = hashlib.sha1()
    for source_dir in _source_dirs:
        for path in sorted((_package_root / source_dir).rglob("*.py")):
            digest.update(path.relative_to(_package_root).as_posix().encode("utf-8"))
            digest.update(path.read_bytes())
    return digest.hexdigest()[:12]
