"""
Sweep and landscape settings
"""

from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.model.config import EditPlan
from src.train.config import TrainConfig

SEGMENTS = ("prefix_only", "suffix_only", "both", "all")
DEPTH_SETTINGS = ("a", "b", "c", "d", "e")


class SweepSpec(BaseModel):
    """Axes of every sweep; each cell trains once per seed."""

    model_config = ConfigDict(extra="forbid")

    visual_ranks: List[int] = Field(default_factory=lambda: [2, 4, 6, 8])
    multimodal_ranks: List[int] = Field(default_factory=lambda: [2, 4, 6, 8])
    depth_settings: List[str] = Field(default_factory=lambda: list(DEPTH_SETTINGS))
    alternating: Literal["even", "odd"] = "even"
    lengths: List[int] = Field(default_factory=lambda: [2, 4, 6, 8, 10])
    segments: List[str] = Field(default_factory=lambda: list(SEGMENTS))
    seeds: List[int] = Field(default_factory=lambda: [0])
    base_plan: EditPlan = Field(default_factory=EditPlan)
    train: TrainConfig = Field(default_factory=TrainConfig)

    @field_validator("visual_ranks", "multimodal_ranks", "lengths", "seeds")
    @classmethod
    def _non_empty_ints(cls, values: List[int]) -> List[int]:
        if not values:
            raise ValueError("sweep axes must be non-empty")
        if any(v < 0 for v in values):
            raise ValueError(f"sweep axis values must be >= 0, got {values}")
        return values

    @field_validator("depth_settings")
    @classmethod
    def _known_depths(cls, values: List[str]) -> List[str]:
        unknown = [v for v in values if v not in DEPTH_SETTINGS]
        if not values or unknown:
            raise ValueError(f"depth_settings must be a non-empty subset of {list(DEPTH_SETTINGS)}, got {values}")
        return values

    @field_validator("segments")
    @classmethod
    def _known_segments(cls, values: List[str]) -> List[str]:
        unknown = [v for v in values if v not in SEGMENTS]
        if not values or unknown:
            raise ValueError(f"segments must be a non-empty subset of {list(SEGMENTS)}, got {values}")
        return values


class LandscapeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    resolution: int = Field(21, ge=1)
    span: float = Field(1.0, gt=0.0)
    seed: int = Field(0, ge=0)
    batch_size: int = Field(64, ge=1)
    emit_matrix: bool = False

    @field_validator("resolution")
    @classmethod
    def _odd(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"resolution must be odd so the grid has a center cell, got {value}")
        return value
