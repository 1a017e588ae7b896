"""
Analysis sweeps and loss landscapes
"""

from src.diagnostics.config import DEPTH_SETTINGS, SEGMENTS, LandscapeConfig, SweepSpec
from src.diagnostics.executor import run_cells
from src.diagnostics.landscape import LandscapeGrid, filter_normalized_directions, grid_axis, loss_landscape, write_landscape
from src.diagnostics.sweeps import (
    CellJob,
    depth_setting,
    depth_sweep,
    length_sweep,
    position_ablation,
    position_plans,
    rank_sweep,
    run_cell,
    segment_ablation,
    segment_plan,
    write_table,
)

__all__ = [
    "CellJob",
    "DEPTH_SETTINGS",
    "LandscapeConfig",
    "LandscapeGrid",
    "SEGMENTS",
    "SweepSpec",
    "depth_setting",
    "depth_sweep",
    "filter_normalized_directions",
    "grid_axis",
    "length_sweep",
    "loss_landscape",
    "position_ablation",
    "position_plans",
    "rank_sweep",
    "run_cell",
    "run_cells",
    "segment_ablation",
    "segment_plan",
    "write_landscape",
    "write_table",
]
