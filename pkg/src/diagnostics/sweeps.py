"""
Rank, depth, length, segment and position sweeps

Every sweep expands into independent cells (plan x seed). A cell builds its
own model view, datasets and editors, trains, and scores the test split.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import pandas as pd

from src.data.config import DataConfig
from src.data.vocab import get_template
from src.diagnostics.config import SweepSpec
from src.diagnostics.executor import run_cells
from src.errors import ConfigError
from src.model.config import EditPlan, ToyModelConfig
from src.model.toy_model import ToyMultimodalModel
from src.model.weights import FrozenWeights
from src.train.trainer import evaluate, train_editors

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CellJob:
    label: Dict[str, object]
    model_config: ToyModelConfig
    weights: FrozenWeights
    plan: Optional[EditPlan]
    spec: SweepSpec
    data: DataConfig
    seed: int
    skip_reason: Optional[str] = None


def run_cell(job: CellJob) -> Dict[str, object]:
    """Train and score one cell; skipped cells report their reason."""
    row: Dict[str, object] = dict(job.label, seed=job.seed)
    if job.plan is None:
        row.update(status="skipped", reason=job.skip_reason)
        return row
    model = ToyMultimodalModel(job.model_config, job.weights)
    size = dict(image_size=job.model_config.image_size, patch_size=job.model_config.patch_size)
    train_set = job.data.build("train", **size)
    test_set = job.data.build("test", **size)
    cfg = job.spec.train.model_copy(update={"seed": job.seed})
    editors, metrics = train_editors(model, job.plan, train_set, cfg)
    row.update(
        status="ok",
        reason="",
        accuracy=evaluate(model, editors, job.plan, test_set),
        final_loss=metrics.losses[-1] if metrics.losses else float("nan"),
        editor_params=editors.param_count(),
        trainable_fraction=metrics.trainable_fraction,
    )
    return row


def _jobs(
    cells: Sequence[Tuple[Dict[str, object], Optional[EditPlan], Optional[str]]],
    model_config: ToyModelConfig,
    weights: FrozenWeights,
    spec: SweepSpec,
    data: DataConfig,
) -> List[CellJob]:
    return [
        CellJob(label, model_config, weights, plan, spec, data, seed, reason)
        for label, plan, reason in cells
        for seed in spec.seeds
    ]


def _run(jobs: List[CellJob], workers: Optional[int]) -> pd.DataFrame:
    return pd.DataFrame(run_cells(run_cell, jobs, workers))


def depth_setting(setting: str, model_config: ToyModelConfig, alternating: str = "even") -> Tuple[Set[int], Set[int]]:
    """
    Visual and decoder layer sets for depth settings a-e.

    a: first layer; b: every even (or odd) layer; c: first half;
    d: latter half, starting at the last layer of the first half; e: all.
    The final vision layer is never eligible.

    Raises:
        ConfigError: unknown setting or alternation
    """
    visual = list(range(1, model_config.readout_layer + 1))
    decoder = list(range(1, model_config.decoder_layers + 1))
    if alternating not in ("even", "odd"):
        raise ConfigError(f"Unknown alternation: '{alternating}'. Known: ['even', 'odd']")

    def pick(layers: List[int]) -> Set[int]:
        if not layers:
            return set()
        half = int(math.ceil(len(layers) / 2))
        if setting == "a":
            return {layers[0]}
        if setting == "b":
            parity = 0 if alternating == "even" else 1
            return {layer for layer in layers if layer % 2 == parity}
        if setting == "c":
            return set(layers[:half])
        if setting == "d":
            return set(layers[half - 1:])
        if setting == "e":
            return set(layers)
        raise ConfigError(f"Unknown depth setting: '{setting}'. Known: ['a', 'b', 'c', 'd', 'e']")

    return pick(visual), pick(decoder)


def rank_sweep(
    model_config: ToyModelConfig,
    weights: FrozenWeights,
    spec: SweepSpec,
    data: DataConfig,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """
    One cell per (visual_rank, multimodal_rank); the cell with the best mean
    accuracy is flagged in the `best` column.

    Raises:
        ConfigError: if a rank exceeds min(d_v, d_t)
    """
    limit = min(model_config.d_v, model_config.d_t)
    too_big = [r for r in spec.visual_ranks + spec.multimodal_ranks if r > limit or r < 1]
    if too_big:
        raise ConfigError(f"sweep ranks must lie in [1, min(d_v, d_t)={limit}], got {sorted(set(too_big))}")
    cells = [
        (
            {"visual_rank": v, "multimodal_rank": m},
            spec.base_plan.model_copy(update={"visual_rank": v, "multimodal_rank": m}),
            None,
        )
        for v in spec.visual_ranks
        for m in spec.multimodal_ranks
    ]
    frame = _run(_jobs(cells, model_config, weights, spec, data), workers)
    means = frame.groupby(["visual_rank", "multimodal_rank"])["accuracy"].transform("mean")
    frame["best"] = means == means.max()
    return frame


def depth_sweep(
    model_config: ToyModelConfig,
    weights: FrozenWeights,
    spec: SweepSpec,
    data: DataConfig,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """One cell per depth setting."""
    cells = []
    for setting in spec.depth_settings:
        visual, decoder = depth_setting(setting, model_config, spec.alternating)
        plan = spec.base_plan.model_copy(
            update={"visual_layers": sorted(visual), "decoder_layers": sorted(decoder)}
        )
        label = {
            "setting": setting,
            "visual_layers": " ".join(map(str, sorted(visual))),
            "decoder_layers": " ".join(map(str, sorted(decoder))),
        }
        cells.append((label, plan, None))
    return _run(_jobs(cells, model_config, weights, spec, data), workers)


def shortest_prompt(data: DataConfig) -> int:
    base = "classify" if data.task in ("classify", "counterfactual_misalign") else "yesno"
    return len(get_template(data.template or base).token_ids("cat"))


def length_sweep(
    model_config: ToyModelConfig,
    weights: FrozenWeights,
    spec: SweepSpec,
    data: DataConfig,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """Prefix and suffix length tied to L; lengths whose spans overflow the prompt are skipped."""
    n = shortest_prompt(data)
    cells = []
    for length in spec.lengths:
        label = {"length": length}
        if 2 * length > n:
            cells.append((label, None, f"prefix + suffix = {2 * length} exceeds prompt length {n}"))
            continue
        plan = spec.base_plan.model_copy(update={"prefix_len": length, "suffix_len": length})
        cells.append((label, plan, None))
    return _run(_jobs(cells, model_config, weights, spec, data), workers)


def segment_plan(segment: str, base: EditPlan) -> EditPlan:
    """prefix_only / suffix_only / both / all (both plus every position in between)."""
    a = base.prefix_len or 4
    s = base.suffix_len or 4
    updates = {
        "prefix_only": {"prefix_len": a, "suffix_len": 0, "infix": False},
        "suffix_only": {"prefix_len": 0, "suffix_len": s, "infix": False},
        "both": {"prefix_len": a, "suffix_len": s, "infix": False},
        "all": {"prefix_len": a, "suffix_len": s, "infix": True},
    }
    if segment not in updates:
        raise ConfigError(f"Unknown segment: '{segment}'. Known: {list(updates)}")
    return base.model_copy(update=updates[segment])


def segment_ablation(
    model_config: ToyModelConfig,
    weights: FrozenWeights,
    spec: SweepSpec,
    data: DataConfig,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    cells = [({"segment": seg}, segment_plan(seg, spec.base_plan), None) for seg in spec.segments]
    return _run(_jobs(cells, model_config, weights, spec, data), workers)


def position_plans(base: EditPlan) -> Dict[str, EditPlan]:
    """The full plan and the plan without each editor family."""
    return {
        "full": base,
        "no_visual": base.model_copy(update={"visual_layers": []}),
        "no_cross_modality": base.model_copy(update={"cross_modality": False}),
        "no_multimodal": base.model_copy(update={"decoder_layers": []}),
    }


def position_ablation(
    model_config: ToyModelConfig,
    weights: FrozenWeights,
    spec: SweepSpec,
    data: DataConfig,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    cells = [({"variant": name}, plan, None) for name, plan in position_plans(spec.base_plan).items()]
    return _run(_jobs(cells, model_config, weights, spec, data), workers)


def write_table(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path
