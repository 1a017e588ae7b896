"""
Loss landscape over editor parameters

theta = theta* + alpha * d1 + beta * d2, where d1 and d2 are seeded Gaussian
directions rescaled per tensor to the norm of the matching trained tensor.
The base model is never perturbed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.config.settings import progress_enabled
from src.data.datasets import Sample
from src.diagnostics.config import LandscapeConfig
from src.editor import EditorBank
from src.errors import DegeneracyError
from src.model.config import EditPlan
from src.model.toy_model import ToyMultimodalModel, dataset_loss

logger = logging.getLogger(__name__)


@dataclass
class LandscapeGrid:
    alphas: np.ndarray
    betas: np.ndarray
    losses: np.ndarray  # (len(alphas), len(betas))

    @property
    def center(self) -> float:
        return float(self.losses[len(self.alphas) // 2, len(self.betas) // 2])

    def to_frame(self) -> pd.DataFrame:
        a, b = np.meshgrid(self.alphas, self.betas, indexing="ij")
        return pd.DataFrame({"alpha": a.ravel(), "beta": b.ravel(), "loss": self.losses.ravel()})


def grid_axis(resolution: int, span: float) -> np.ndarray:
    """Symmetric axis in [-span, span] whose middle entry is exactly 0."""
    half = resolution // 2
    if half == 0:
        return np.zeros(1)
    return span * (np.arange(resolution) - half) / half


def filter_normalized_directions(editors: EditorBank, seed: int) -> List[List[np.ndarray]]:
    """Two random directions, each tensor rescaled to its parameter's norm."""
    rng = np.random.default_rng(seed)
    directions = []
    for _ in range(2):
        direction = []
        for leaf in editors.leaves():
            d = rng.standard_normal(leaf.shape)
            d_norm = np.linalg.norm(d)
            direction.append(d * (np.linalg.norm(leaf.value) / d_norm) if d_norm > 0 else np.zeros(leaf.shape))
        directions.append(direction)
    return directions


def loss_landscape(
    model: ToyMultimodalModel,
    editors: EditorBank,
    plan: EditPlan,
    dataset: Sequence[Sample],
    cfg: LandscapeConfig,
) -> LandscapeGrid:
    """
    Mean training loss on a 2-D grid around the trained editors.

    Non-finite cells are kept as they are. The input editors are not modified.
    """
    probe = editors.copy()
    leaves = probe.leaves()
    center = [leaf.value.copy() for leaf in leaves]
    d1, d2 = filter_normalized_directions(probe, cfg.seed)
    alphas = grid_axis(cfg.resolution, cfg.span)
    betas = grid_axis(cfg.resolution, cfg.span)
    losses = np.empty((len(alphas), len(betas)))

    cells = [(i, j) for i in range(len(alphas)) for j in range(len(betas))]
    for i, j in tqdm(cells, desc="landscape", disable=not progress_enabled()):
        for leaf, theta, u, v in zip(leaves, center, d1, d2):
            leaf.value[...] = theta + alphas[i] * u + betas[j] * v
        try:
            losses[i, j] = dataset_loss(model, probe, plan, dataset, cfg.batch_size)
        except (FloatingPointError, DegeneracyError):
            losses[i, j] = np.nan
    bad = int(np.sum(~np.isfinite(losses)))
    if bad:
        logger.warning("%d of %d landscape cells are non-finite", bad, losses.size)
    return LandscapeGrid(alphas=alphas, betas=betas, losses=losses)


def write_landscape(grid: LandscapeGrid, path: Union[str, Path], emit_matrix: bool = False) -> Path:
    """CSV (alpha, beta, loss); optionally a whitespace matrix next to it for gnuplot-style plotting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid.to_frame().to_csv(path, index=False)
    if emit_matrix:
        np.savetxt(path.with_suffix(".dat"), grid.losses, fmt="%.10g")
    return path
