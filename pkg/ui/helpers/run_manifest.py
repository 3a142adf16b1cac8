import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from common import manifest_file_name
from common.helpers import build_id
from data_prep.normalize_data import write_json


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunManifest(BaseModel):
    command: str
    argv: List[str] = Field(default_factory=list)
    config: Dict[str, Any] = Field(default_factory=dict, description="resolved configuration")
    seed: Optional[int] = None
    build_id: str = Field(default_factory=build_id)
    started_at: str = Field(default_factory=_now)
    finished_at: Optional[str] = None
    status: str = "running"
    outputs: Dict[str, str] = Field(default_factory=dict)
    error_message: Optional[str] = None


def manifest_path_for(out: Optional[str | Path], is_dir: bool) -> Optional[Path]:
    """Directory outputs hold `run_manifest.json`; a file output gets a sibling `<name>.run_manifest.json`"""
    if out is None:
        return None
    out = Path(out)
    if is_dir:
        return out / manifest_file_name
    return out.with_name(f"{out.name}.{manifest_file_name}")


class RunLogger:
    """Keeps the manifest of one command up to date on disk"""

    def __init__(self, manifest: RunManifest, path: Optional[Path]):
        self.manifest = manifest
        self.path = path
        self.write()

    @classmethod
    def start(
            cls,
            command: str,
            config: Dict[str, Any],
            seed: Optional[int],
            out: Optional[str | Path],
            is_dir: bool = False,
    ) -> "RunLogger":
        manifest = RunManifest(command=command, argv=sys.argv[1:], config=config, seed=seed)
        return cls(manifest, manifest_path_for(out, is_dir))

    def __enter__(self) -> "RunLogger":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc is not None:
            self.finish("failed", str(exc) or exc_type.__name__)
        elif self.manifest.finished_at is None:
            self.finish()

    def add_output(self, name: str, path: str | Path) -> None:
        self.manifest.outputs[name] = str(path)

    def finish(self, status: str = "ok", error_message: Optional[str] = None) -> None:
        payload = {
            k: v for k, v in {"status": status, "error_message": error_message, "finished_at": _now()}.items()
            if v is not None
        }
        self.manifest = self.manifest.model_copy(update=payload)
        self.write()

    def write(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        write_json(self.manifest.model_dump(), str(self.path))
