"""
Editor-only training loop and exact-match evaluation
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.config.settings import progress_enabled
from src.data.datasets import Sample, collate
from src.data.vocab import EOS_ID, PAD_ID, detokenize
from src.editor import EditorBank
from src.errors import ConfigError, MRTError, NumericError
from src.model.config import EditPlan
from src.model.toy_model import ToyMultimodalModel, trainable_fraction
from src.tensor import backward, no_grad
from src.train.config import TrainConfig
from src.train.optimizer import Adam, clip_grad_norm
from src.train.schedule import lr_at, total_steps

logger = logging.getLogger(__name__)

StepHook = Callable[[int, float, float], None]


@dataclass
class RunMetrics:
    steps: List[int] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    lrs: List[float] = field(default_factory=list)
    evals: List[Tuple[int, float]] = field(default_factory=list)
    trainable_fraction: float = 0.0
    updated_tensors: int = 0
    wall_clock: float = 0.0
    final_accuracy: Optional[float] = None
    base_digest: Optional[str] = None
    rng_state: Optional[Dict] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"step": self.steps, "loss": self.losses, "lr": self.lrs})


def train_editors(
    model: ToyMultimodalModel,
    plan: EditPlan,
    dataset: Sequence[Sample],
    cfg: TrainConfig,
    editors: Optional[EditorBank] = None,
    eval_set: Optional[Sequence[Sample]] = None,
    on_step: Optional[StepHook] = None,
) -> Tuple[EditorBank, RunMetrics]:
    """
    Fine-tune the editors of `plan` on `dataset`; the base model stays frozen.

    Args:
        model: frozen base
        plan: edit plan, validated against the model
        dataset: training samples
        cfg: training settings
        editors: start from these editors instead of a fresh bank (trained in place)
        eval_set: scored every cfg.eval_every steps and at the end
        on_step: called as on_step(step, loss, lr) after every update

    Returns:
        (trained editors, metrics)

    Raises:
        ConfigError: empty dataset or invalid plan
        NumericError: non-finite loss, naming the step
        MRTError: if the base weights changed during training
    """
    if not dataset:
        raise ConfigError("train_editors needs a non-empty dataset")
    plan.validate_for(model.config)
    editors = editors if editors is not None else EditorBank.from_plan(plan, model.config, seed=cfg.seed)

    leaves = editors.leaves()
    base_ids = {id(node) for node in model.base_leaves()}
    if any(id(leaf) in base_ids for leaf in leaves) or any(n.requires_grad for n in model.base_leaves()):
        raise ConfigError("editor training needs a frozen base; build the model with trainable_base=False")
    base_digest = model.weights.digest()
    optimizer = Adam(leaves, betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps, weight_decay=cfg.weight_decay)

    metrics = RunMetrics(trainable_fraction=trainable_fraction(model, editors), updated_tensors=len(leaves))
    n_steps = total_steps(len(dataset), cfg)
    rng = np.random.default_rng(cfg.seed)
    started = time.perf_counter()
    logger.info(
        "training %d editors (%d params, %.3f%% of total) for %d steps",
        len(editors), editors.param_count(), 100 * metrics.trainable_fraction, n_steps,
    )

    step = 0
    with tqdm(total=n_steps, desc="train", disable=not progress_enabled()) as bar:
        while step < n_steps:
            order = rng.permutation(len(dataset))
            for start in range(0, len(order), cfg.batch_size):
                if step >= n_steps:
                    break
                batch = collate([dataset[i] for i in order[start:start + cfg.batch_size]])
                optimizer.zero_grad()
                loss = model.forward_loss(batch, editors, plan)
                loss_value = float(loss.value)
                if not np.isfinite(loss_value):
                    raise NumericError(f"training diverged: loss is {loss_value} at step {step}", step=step)
                backward(loss)
                if cfg.max_grad_norm is not None:
                    clip_grad_norm(leaves, cfg.max_grad_norm)
                lr = lr_at(step, n_steps, cfg)
                optimizer.step(lr)

                metrics.steps.append(step)
                metrics.losses.append(loss_value)
                metrics.lrs.append(lr)
                if on_step is not None:
                    on_step(step, loss_value, lr)
                step += 1
                bar.update(1)
                bar.set_postfix(loss=f"{loss_value:.4f}")
                if eval_set and cfg.eval_every and step % cfg.eval_every == 0:
                    metrics.evals.append((step, evaluate(model, editors, plan, eval_set)))

    if eval_set:
        metrics.final_accuracy = evaluate(model, editors, plan, eval_set)
        metrics.evals.append((step, metrics.final_accuracy))
    metrics.wall_clock = time.perf_counter() - started
    metrics.rng_state = rng.bit_generator.state
    if model.weights.digest() != base_digest:
        raise MRTError("base weights changed during editor training")
    metrics.base_digest = base_digest
    if metrics.losses:
        logger.info("finished: loss %.4f -> %.4f", metrics.losses[0], metrics.losses[-1])
    return editors, metrics


def predict(
    model: ToyMultimodalModel,
    editors: Optional[EditorBank],
    plan: Optional[EditPlan],
    samples: Sequence[Sample],
    batch_size: int = 64,
    max_new: int = 3,
) -> List[List[int]]:
    """Greedy answers (token ids, <eos> stripped) for every sample."""
    answers: List[List[int]] = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        batch = collate(chunk)
        answers += model.generate(
            batch.images,
            [s.prompt_ids for s in chunk],
            editors,
            plan,
            max_new=max_new,
            eos_id=EOS_ID,
            pad_id=PAD_ID,
            roi_mask=batch.roi_mask,
        )
    return answers


def predict_text(model, editors, plan, samples: Sequence[Sample], batch_size: int = 64) -> List[str]:
    return [detokenize(ids) for ids in predict(model, editors, plan, samples, batch_size)]


def evaluate(
    model: ToyMultimodalModel,
    editors: Optional[EditorBank],
    plan: Optional[EditPlan],
    dataset: Sequence[Sample],
    batch_size: int = 64,
) -> float:
    """Fraction of samples whose greedy answer equals the gold answer tokens exactly."""
    if not dataset:
        return 0.0
    with no_grad():
        answers = predict(model, editors, plan, dataset, batch_size)
    correct = sum(1 for sample, answer in zip(dataset, answers) if answer == sample.answer_ids)
    return correct / len(dataset)


def write_metrics(metrics: RunMetrics, out_dir: Union[str, Path], extra: Optional[Dict] = None) -> Dict:
    """Write metrics.csv (step, loss, lr) and summary.json; returns the summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics.to_frame().to_csv(out_dir / "metrics.csv", index=False)
    summary = {
        "final_accuracy": metrics.final_accuracy,
        "trainable_fraction": metrics.trainable_fraction,
        "steps": len(metrics.steps),
        "initial_loss": metrics.losses[0] if metrics.losses else None,
        "final_loss": metrics.losses[-1] if metrics.losses else None,
        "evals": [{"step": s, "accuracy": a} for s, a in metrics.evals],
        "wall_clock_seconds": metrics.wall_clock,
    }
    summary.update(extra or {})
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
