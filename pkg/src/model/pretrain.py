"""
Full-weight training passes that produce a frozen base

pretrain_base     short pass from random init; stops as soon as held-out
                  classify accuracy reaches the headroom target, so the
                  base is above chance but leaves room for the editors.
headroom_train    continues training an existing base until it is
                  competent on yes/no questions (control-run precondition).
"""

from __future__ import annotations

import logging
from typing import Callable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from src.config.settings import progress_enabled
from src.data.datasets import Sample, collate, make_dataset
from src.errors import NumericError
from src.model.config import EditPlan, ToyModelConfig
from src.model.toy_model import ToyMultimodalModel
from src.model.weights import FrozenWeights, init_weights
from src.tensor import backward
from src.train.config import TrainConfig
from src.train.optimizer import Adam
from src.train.schedule import lr_at

logger = logging.getLogger(__name__)


class PretrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    steps: int = Field(3000, ge=0)
    learning_rate: float = Field(2e-3, gt=0.0)
    batch_size: int = Field(32, ge=1)
    warmup_ratio: float = Field(0.03, ge=0.0, lt=1.0)
    n_per_class: int = Field(100, ge=1)
    task_mix: List[str] = Field(default_factory=lambda: ["classify", "yesno"])
    # stop once held-out classify accuracy reaches this; None trains every step
    headroom_accuracy: Optional[float] = Field(0.3, ge=0.0, le=1.0)
    eval_every: int = Field(25, ge=1)
    val_per_class: int = Field(10, ge=1)


class HeadroomConfig(BaseModel):
    """Continued base training that makes a base yes/no competent before control runs."""

    model_config = ConfigDict(extra="forbid")

    steps: int = Field(3000, ge=0)
    learning_rate: float = Field(1e-3, gt=0.0)
    batch_size: int = Field(32, ge=1)
    warmup_ratio: float = Field(0.03, ge=0.0, lt=1.0)
    n_per_class: int = Field(100, ge=1)
    task_mix: List[str] = Field(default_factory=lambda: ["yesno", "classify"])
    # held-out target is the gate threshold plus this margin
    margin: float = Field(0.05, ge=0.0)
    eval_every: int = Field(100, ge=1)
    val_per_class: int = Field(10, ge=1)


def pretrain_mix(
    config: ToyModelConfig, task_mix: Sequence[str], n_per_class: int, seed: int, split: str = "pretrain"
) -> List[Sample]:
    """Concatenated datasets for every task in the mix."""
    samples: List[Sample] = []
    for task in task_mix:
        samples += make_dataset(
            task, n_per_class, seed, split=split,
            image_size=config.image_size, patch_size=config.patch_size,
        )
    return samples


def _fit(
    model: ToyMultimodalModel,
    samples: Sequence[Sample],
    settings,
    seed: int,
    desc: str,
    reached: Optional[Callable[[], bool]] = None,
) -> int:
    """
    Adam over every base weight; returns the number of steps taken.

    reached() is polled every settings.eval_every steps, step 0 included,
    and ends training early when it returns True.
    """
    schedule = TrainConfig(learning_rate=settings.learning_rate, warmup_ratio=settings.warmup_ratio)
    optimizer = Adam(model.base_leaves())
    plan = EditPlan.none()
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    cursor = 0
    for step in tqdm(range(settings.steps), desc=desc, disable=not progress_enabled()):
        if reached is not None and step % settings.eval_every == 0 and reached():
            return step
        if cursor + settings.batch_size > len(order):
            order, cursor = rng.permutation(len(samples)), 0
        batch = collate([samples[i] for i in order[cursor:cursor + settings.batch_size]])
        cursor += settings.batch_size
        optimizer.zero_grad()
        loss = model.forward_loss(batch, None, plan)
        if not np.isfinite(loss.value):
            raise NumericError(f"{desc} diverged at step {step}", step=step)
        backward(loss)
        optimizer.step(lr_at(step, settings.steps, schedule))
    return settings.steps


def _frozen(model: ToyMultimodalModel) -> FrozenWeights:
    return FrozenWeights({name: node.value for name, node in model.params.items()})


def pretrain_base(
    config: ToyModelConfig,
    seed: int,
    task_mix: Optional[Sequence[str]] = None,
    settings: Optional[PretrainConfig] = None,
) -> FrozenWeights:
    """
    Train every base weight on the pretrain split, from a seeded random init.

    Training stops early once classify accuracy on a held-out split reaches
    settings.headroom_accuracy. Deterministic under seed. Zero steps
    returns the random initialization.

    Raises:
        NumericError: if the loss becomes non-finite
    """
    settings = settings or PretrainConfig()
    from src.train.trainer import evaluate

    task_mix = list(task_mix or settings.task_mix)
    weights = init_weights(config, seed)
    if settings.steps == 0:
        return weights

    model = ToyMultimodalModel(config, weights, trainable_base=True)
    samples = pretrain_mix(config, task_mix, settings.n_per_class, seed % 1000)
    reached = None
    if settings.headroom_accuracy is not None:
        val = pretrain_mix(config, ["classify"], settings.val_per_class, seed % 1000, split="val")

        def reached() -> bool:
            return evaluate(model, None, None, val) >= settings.headroom_accuracy

    logger.info("pretraining base on %s (%d samples, up to %d steps)", task_mix, len(samples), settings.steps)

    taken = _fit(model, samples, settings, seed, "pretrain", reached)
    if taken < settings.steps:
        logger.info("classify headroom target %.2f reached after %d steps", settings.headroom_accuracy, taken)
    elif reached is not None:
        logger.warning("pretraining used all %d steps without reaching classify accuracy %.2f",
                       settings.steps, settings.headroom_accuracy)
    return _frozen(model)


def headroom_train(
    config: ToyModelConfig,
    weights: FrozenWeights,
    seed: int,
    target_accuracy: float,
    settings: Optional[HeadroomConfig] = None,
) -> FrozenWeights:
    """
    Continue training a base until held-out yes/no accuracy reaches
    min(1, target_accuracy + settings.margin).

    Returns the input weights unchanged when the base already meets the
    target. Deterministic under seed.

    Raises:
        NumericError: if the loss becomes non-finite
    """
    settings = settings or HeadroomConfig()
    from src.train.trainer import evaluate

    if settings.steps == 0:
        return weights
    model = ToyMultimodalModel(config, weights, trainable_base=True)
    target = min(1.0, target_accuracy + settings.margin)
    val = pretrain_mix(config, ["yesno"], settings.val_per_class, seed % 1000, split="val")
    scores: List[float] = []

    def reached() -> bool:
        scores.append(evaluate(model, None, None, val))
        return scores[-1] >= target

    samples = pretrain_mix(config, settings.task_mix, settings.n_per_class, seed % 1000)
    logger.info("headroom training on %s towards yes/no accuracy %.2f", settings.task_mix, target)
    taken = _fit(model, samples, settings, seed, "headroom", reached)
    if taken == 0:
        return weights
    if taken == settings.steps:
        logger.warning("headroom training used all %d steps; last yes/no accuracy %.3f", taken, scores[-1])
    return _frozen(model)
