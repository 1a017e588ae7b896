"""
Run configuration file

A run is a pure function of its RunConfig (plus the code version); every
artifact directory gets the resolved config written next to its outputs.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.control.harness import ControlConfig
from src.data.config import DataConfig
from src.diagnostics.config import LandscapeConfig, SweepSpec
from src.errors import ConfigError
from src.model.config import EditPlan, ToyModelConfig
from src.model.pretrain import PretrainConfig
from src.train.config import TrainConfig


class PathsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    out_dir: str = "runs/default"
    base_checkpoint: Optional[str] = None
    checkpoint: Optional[str] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0)
    model: ToyModelConfig = Field(default_factory=ToyModelConfig)
    plan: EditPlan = Field(default_factory=EditPlan)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    sweep: SweepSpec = Field(default_factory=SweepSpec)
    landscape: LandscapeConfig = Field(default_factory=LandscapeConfig)
    control: ControlConfig = Field(default_factory=ControlConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)


def _format_validation_error(error: ValidationError, source: str) -> str:
    lines = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{key}: {item['msg']}")
    return f"invalid run config {source}: " + "; ".join(lines)


def config_from_dict(data: Dict[str, Any], source: str = "<dict>") -> RunConfig:
    """
    Raises:
        ConfigError: naming every offending dotted key
    """
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e, source)) from e


def parse_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """
    Load a JSON run config; None gives all defaults.

    Raises:
        ConfigError: missing file, malformed JSON, unknown key or invalid range
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object, got {type(data).__name__}")
    return config_from_dict(data, str(path))


def canonical_json(config: RunConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical sorted JSON dump."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def write_config(config: RunConfig, out_dir: Union[str, Path]) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "run_config.json"
    path.write_text(json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True))
    return path
