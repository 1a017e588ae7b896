"""
Synthetic instruction datasets

Tasks:
    classify                      "what is the object ..." -> class word
    yesno                         "is the object an <cls> ..." -> yes / no (50/50)
    counterfactual_misclass       yesno, class e always answered "no"
    counterfactual_misalign       classify, class e answered with class e_bar's word
    counterfactual_indeterminate  yesno, class e answered "not sure"

Counterfactual datasets reuse the clean dataset's images and prompts and
only rewrite the responses of affected samples.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from src.data.images import NUM_CLASSES, SynthImage, gen_image
from src.data.vocab import (
    ANSWER_NO,
    ANSWER_NOT_SURE,
    ANSWER_YES,
    CLASS_WORDS,
    EOS_ID,
    PAD_ID,
    get_template,
    tokenize,
)
from src.errors import ConfigError

logger = logging.getLogger(__name__)

TASKS = (
    "classify",
    "yesno",
    "counterfactual_misclass",
    "counterfactual_misalign",
    "counterfactual_indeterminate",
)

SPLIT_OFFSETS = {"train": 0, "test": 100_000_000, "pretrain": 200_000_000, "val": 300_000_000}
_SEED_STRIDE = 100_000
_CLASS_STRIDE = 10_000


@dataclass(frozen=True)
class Sample:
    image: SynthImage
    token_ids: List[int]
    prompt_len: int
    answer: str
    task: str
    template: str

    @property
    def class_id(self) -> int:
        return self.image.class_id

    @property
    def prompt_ids(self) -> List[int]:
        return self.token_ids[:self.prompt_len]

    @property
    def answer_ids(self) -> List[int]:
        """Response tokens without the trailing <eos>."""
        return self.token_ids[self.prompt_len:-1]

    @property
    def loss_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.token_ids), dtype=bool)
        mask[self.prompt_len:] = True
        return mask


@dataclass
class Batch:
    """Right-padded collation of samples."""

    images: np.ndarray
    token_ids: np.ndarray
    loss_mask: np.ndarray
    prompt_lens: np.ndarray
    roi_mask: np.ndarray
    class_ids: np.ndarray

    def __len__(self) -> int:
        return int(self.token_ids.shape[0])


def image_seed(split: str, seed: int, class_id: int, index: int) -> int:
    """Image seeds are disjoint across splits, run seeds, classes and indices."""
    if split not in SPLIT_OFFSETS:
        raise ConfigError(f"Unknown split: '{split}'. Known: {sorted(SPLIT_OFFSETS)}")
    if not 0 <= seed < 1000:
        raise ConfigError(f"dataset seed must lie in [0, 1000), got {seed}")
    if not 0 <= index < _CLASS_STRIDE:
        raise ConfigError(f"n_per_class must be below {_CLASS_STRIDE}, got index {index}")
    return SPLIT_OFFSETS[split] + seed * _SEED_STRIDE + class_id * _CLASS_STRIDE + index


def _sample(image: SynthImage, prompt: str, answer: str, task: str, template: str) -> Sample:
    prompt_ids = tokenize(prompt)
    return Sample(
        image=image,
        token_ids=prompt_ids + tokenize(answer) + [EOS_ID],
        prompt_len=len(prompt_ids),
        answer=answer,
        task=task,
        template=template,
    )


def _clean_samples(
    base_task: str,
    n_per_class: int,
    seed: int,
    split: str,
    template: str,
    image_size: int,
    patch_size: int,
) -> List[Sample]:
    prompt_template = get_template(template)
    samples: List[Sample] = []
    for index in range(n_per_class):
        for class_id in range(NUM_CLASSES):
            img_seed = image_seed(split, seed, class_id, index)
            image = gen_image(class_id, img_seed, image_size=image_size, patch_size=patch_size)
            if base_task == "classify":
                samples.append(
                    _sample(image, prompt_template.render(), CLASS_WORDS[class_id], base_task, template)
                )
            else:
                # matched when index + class is even: every class alternates and each index is 50/50
                if (index + class_id) % 2 == 0:
                    shown, answer = class_id, ANSWER_YES
                else:
                    offset = int(np.random.default_rng(img_seed).integers(1, NUM_CLASSES))
                    shown, answer = (class_id + offset) % NUM_CLASSES, ANSWER_NO
                samples.append(
                    _sample(image, prompt_template.render(CLASS_WORDS[shown]), answer, base_task, template)
                )
    return samples


def make_dataset(
    task: str,
    n_per_class: int,
    seed: int,
    split: str = "train",
    template: Optional[str] = None,
    target_class: Optional[int] = None,
    misalign_target: Optional[int] = None,
    image_size: int = 16,
    patch_size: int = 4,
) -> List[Sample]:
    """
    Build a dataset as a pure function of its arguments.

    Args:
        task: one of TASKS
        n_per_class: samples per class
        seed: dataset seed in [0, 1000)
        split: train | test | pretrain (disjoint image seeds)
        template: prompt template name; defaults to classify or yesno per task
        target_class: class e for counterfactual tasks
        misalign_target: class e_bar for counterfactual_misalign

    Raises:
        ConfigError: unknown task, or missing / invalid counterfactual targets
    """
    if task not in TASKS:
        raise ConfigError(f"Unknown task: '{task}'. Known: {list(TASKS)}")
    if n_per_class < 0:
        raise ConfigError(f"n_per_class must be >= 0, got {n_per_class}")

    base_task = "classify" if task in ("classify", "counterfactual_misalign") else "yesno"
    template = template or base_task
    if base_task == "classify" and "{cls}" in get_template(template).text:
        raise ConfigError(f"task '{task}' needs a template without a class slot, got '{template}'")
    if base_task == "yesno" and "{cls}" not in get_template(template).text:
        raise ConfigError(f"task '{task}' needs a template with a class slot, got '{template}'")

    samples = _clean_samples(base_task, n_per_class, seed, split, template, image_size, patch_size)
    if task in ("classify", "yesno"):
        return samples

    if target_class is None or not 0 <= target_class < NUM_CLASSES:
        raise ConfigError(f"task '{task}' needs target_class in [0, {NUM_CLASSES}), got {target_class}")
    if task == "counterfactual_misalign":
        if misalign_target is None or not 0 <= misalign_target < NUM_CLASSES:
            raise ConfigError(f"counterfactual_misalign needs misalign_target in [0, {NUM_CLASSES}), got {misalign_target}")
        if misalign_target == target_class:
            raise ConfigError(f"misalign_target must differ from target_class ({target_class})")
        new_answer = CLASS_WORDS[misalign_target]
    elif task == "counterfactual_misclass":
        new_answer = ANSWER_NO
    else:
        new_answer = ANSWER_NOT_SURE

    relabeled = []
    for sample in samples:
        if sample.class_id == target_class and sample.answer != new_answer:
            prompt_ids = sample.prompt_ids
            sample = replace(
                sample,
                token_ids=prompt_ids + tokenize(new_answer) + [EOS_ID],
                answer=new_answer,
            )
        relabeled.append(replace(sample, task=task))
    logger.debug("built %d samples for task=%s split=%s", len(relabeled), task, split)
    return relabeled


def collate(samples: Sequence[Sample]) -> Batch:
    """Stack samples into a right-padded Batch."""
    if not samples:
        raise ConfigError("cannot collate an empty list of samples")
    width = max(len(s.token_ids) for s in samples)
    token_ids = np.full((len(samples), width), PAD_ID, dtype=np.int64)
    loss_mask = np.zeros((len(samples), width), dtype=bool)
    for row, sample in enumerate(samples):
        token_ids[row, :len(sample.token_ids)] = sample.token_ids
        loss_mask[row, :len(sample.token_ids)] = sample.loss_mask
    return Batch(
        images=np.stack([s.image.pixels for s in samples]),
        token_ids=token_ids,
        loss_mask=loss_mask,
        prompt_lens=np.array([s.prompt_len for s in samples], dtype=np.int64),
        roi_mask=np.stack([s.image.roi_mask() for s in samples]),
        class_ids=np.array([s.class_id for s in samples], dtype=np.int64),
    )


def dump_jsonl(samples: Sequence[Sample], path: Union[str, Path]) -> Path:
    """One JSON line per sample: class, seed, pixels, tokens, label, roi. Floats keep full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for s in samples:
            record = {
                "class": int(s.class_id),
                "seed": int(s.image.seed),
                "pixels": s.image.pixels.ravel().tolist(),
                "tokens": [int(t) for t in s.token_ids],
                "label": s.answer,
                "roi": [int(p) for p in s.image.roi_patches],
            }
            f.write(json.dumps(record) + "\n")
    return path
