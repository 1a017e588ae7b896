"""
Editor sets and the per-plan editor bank
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.editor.editor import EditorParams, init_editor, param_count
from src.errors import ConfigError, DimensionError
from src.tensor import Node

if TYPE_CHECKING:
    from src.model.config import EditPlan, ToyModelConfig


class Site(str, Enum):
    """Where an editor is attached."""

    VISUAL = "visual"
    CROSS_MODALITY = "cross_modality"
    PREFIX = "prefix"
    SUFFIX = "suffix"
    INFIX = "infix"
    CONTROL_TARGET = "control_target"


_SITE_CODES = {site: code for code, site in enumerate(Site)}


@dataclass
class EditorSet:
    """All editors of one site, one per layer."""

    site: Site
    editors: Dict[int, EditorParams] = field(default_factory=dict)

    def add(self, layer: int, editor: EditorParams) -> None:
        if layer in self.editors:
            raise ConfigError(f"site '{self.site.value}' already has an editor at layer {layer}")
        self.editors[layer] = editor

    def layers(self) -> List[int]:
        return sorted(self.editors)


class EditorBank:
    """
    The trainable state of one run: an EditorSet per site.

    Usage:
        bank = EditorBank.from_plan(plan, model_config, seed=0)
        bank.get(Site.PREFIX, 2)
        optimizer = Adam(bank.leaves())
    """

    def __init__(self, sets: Optional[Dict[Site, EditorSet]] = None):
        self.sets: Dict[Site, EditorSet] = dict(sets or {})

    @classmethod
    def from_plan(cls, plan: "EditPlan", model_config: "ToyModelConfig", seed: int) -> "EditorBank":
        """Initialize every editor the plan asks for; editor seeds derive from (seed, site, layer)."""
        bank = cls()

        def make(site: Site, layer: int, rank: int, dim: int) -> None:
            bank.add(site, layer, init_editor(rank, dim, seed=[seed, _SITE_CODES[site], layer]))

        for layer in sorted(plan.visual_layers):
            make(Site.VISUAL, layer, plan.visual_rank, model_config.d_v)
        if plan.cross_modality:
            make(Site.CROSS_MODALITY, 0, plan.visual_rank, model_config.d_t)

        decoder_sites: List[Site] = []
        if plan.control_token_index is not None:
            decoder_sites.append(Site.CONTROL_TARGET)
        else:
            if plan.prefix_len > 0:
                decoder_sites.append(Site.PREFIX)
            if plan.infix:
                decoder_sites.append(Site.INFIX)
            if plan.suffix_len > 0:
                decoder_sites.append(Site.SUFFIX)
        for layer in sorted(plan.decoder_layers):
            for site in decoder_sites:
                make(site, layer, plan.multimodal_rank, model_config.d_t)
        return bank

    def add(self, site: Site, layer: int, editor: EditorParams) -> None:
        site = Site(site)
        self.sets.setdefault(site, EditorSet(site)).add(layer, editor)

    def get(self, site: Site, layer: int) -> Optional[EditorParams]:
        editor_set = self.sets.get(Site(site))
        return None if editor_set is None else editor_set.editors.get(layer)

    def items(self) -> Iterator[Tuple[Site, int, EditorParams]]:
        """(site, layer, editor) in a fixed order: site declaration order, then layer."""
        for site in Site:
            editor_set = self.sets.get(site)
            if editor_set is None:
                continue
            for layer in editor_set.layers():
                yield site, layer, editor_set.editors[layer]

    def leaves(self) -> List[Node]:
        return [leaf for _, _, editor in self.items() for leaf in editor.leaves()]

    def param_count(self) -> int:
        return sum(param_count(editor) for _, _, editor in self.items())

    def __len__(self) -> int:
        return sum(1 for _ in self.items())

    def copy(self) -> "EditorBank":
        bank = EditorBank()
        for site, layer, editor in self.items():
            bank.add(site, layer, editor.copy())
        return bank

    def set_identity(self) -> None:
        for _, _, editor in self.items():
            editor.set_identity()

    def to_arrays(self) -> List[Dict]:
        """Serializable records {site, layer, rank, dim, raw_U, W, bias}."""
        return [
            {
                "site": site.value,
                "layer": layer,
                "rank": editor.rank,
                "dim": editor.dim,
                "raw_U": editor.raw_U.value.copy(),
                "W": editor.W.value.copy(),
                "bias": editor.bias.value.copy(),
            }
            for site, layer, editor in self.items()
        ]

    @classmethod
    def from_arrays(cls, records: List[Dict]) -> "EditorBank":
        bank = cls()
        for record in records:
            rank, dim = int(record["rank"]), int(record["dim"])
            expected = {"raw_U": (rank, dim), "W": (rank, dim), "bias": (rank,)}
            for key, shape in expected.items():
                if tuple(np.shape(record[key])) != shape:
                    raise DimensionError(
                        f"editor {record['site']}/{record['layer']} tensor '{key}' has shape "
                        f"{tuple(np.shape(record[key]))}, expected {shape}"
                    )
            bank.add(
                Site(record["site"]),
                int(record["layer"]),
                EditorParams(
                    rank=rank,
                    dim=dim,
                    raw_U=Node(np.array(record["raw_U"], dtype=np.float64), requires_grad=True, name="raw_U"),
                    W=Node(np.array(record["W"], dtype=np.float64), requires_grad=True, name="W"),
                    bias=Node(np.array(record["bias"], dtype=np.float64), requires_grad=True, name="bias"),
                ),
            )
        return bank
