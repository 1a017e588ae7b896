"""
Training hyperparameters
"""

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class TrainConfig(BaseModel):
    """Editor-only fine-tuning settings (Adam, linear warmup then linear decay)."""

    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(6e-4, gt=0.0)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(3, ge=1)
    warmup_ratio: float = Field(0.03, ge=0.0, lt=1.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    weight_decay: float = Field(0.0, ge=0.0)
    max_grad_norm: Optional[float] = Field(None, gt=0.0)
    max_steps: Optional[int] = Field(None, ge=0)
    eval_every: int = Field(0, ge=0)
    seed: int = Field(0, ge=0)
