"""
Linear warmup / linear decay learning-rate schedule
"""

import math

from src.errors import ConfigError
from src.train.config import TrainConfig


def warmup_steps(total_steps: int, warmup_ratio: float) -> int:
    return int(math.ceil(warmup_ratio * total_steps))


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """
    Learning rate for optimizer step `step` of `total_steps`.

    Ramps 0 -> lr over ceil(warmup_ratio * total_steps) steps, then decays
    linearly to 0 at total_steps.

    Raises:
        ConfigError: if step is outside [0, total_steps]
    """
    if total_steps == 0:
        return 0.0
    if not 0 <= step <= total_steps:
        raise ConfigError(f"step must lie in [0, {total_steps}], got {step}")
    warm = warmup_steps(total_steps, cfg.warmup_ratio)
    if step < warm:
        return cfg.learning_rate * step / warm
    return cfg.learning_rate * (total_steps - step) / max(total_steps - warm, 1)


def total_steps(num_samples: int, cfg: TrainConfig) -> int:
    """Optimizer steps for a run: batches per epoch times epochs, capped by max_steps."""
    steps = int(math.ceil(num_samples / cfg.batch_size)) * cfg.epochs
    return steps if cfg.max_steps is None else min(steps, cfg.max_steps)
