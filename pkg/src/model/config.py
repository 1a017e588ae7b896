"""
Model dimensions and edit plans

Both are pydantic models with unknown keys rejected, so they can be parsed
straight out of a run-config JSON file.
"""

from __future__ import annotations

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.errors import ConfigError


class ToyModelConfig(BaseModel):
    """Dimensions of the frozen toy vision-language model."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    d_v: int = Field(32, ge=2)
    d_t: int = Field(48, ge=2)
    vision_layers: int = Field(4, ge=1)
    decoder_layers: int = Field(4, ge=1)
    heads: int = Field(4, ge=1)
    patch_grid: int = Field(4, ge=1)
    patch_size: int = Field(4, ge=1)
    vocab_size: int = Field(64, ge=2)
    max_seq: int = Field(32, ge=2)
    mlp_ratio: int = Field(8, ge=1)
    init_std: float = Field(0.02, gt=0.0)
    ln_eps: float = Field(1e-5, gt=0.0)

    @model_validator(mode="after")
    def _check_heads(self) -> "ToyModelConfig":
        for name in ("d_v", "d_t"):
            if getattr(self, name) % self.heads != 0:
                raise ValueError(f"{name}={getattr(self, name)} is not divisible by heads={self.heads}")
        if self.num_patches >= self.max_seq:
            raise ValueError(f"max_seq={self.max_seq} leaves no room for text after {self.num_patches} visual tokens")
        return self

    @property
    def num_patches(self) -> int:
        """m, the number of visual tokens."""
        return self.patch_grid ** 2

    @property
    def image_size(self) -> int:
        return self.patch_grid * self.patch_size

    @property
    def readout_layer(self) -> int:
        """Vision layer whose output feeds the projector (the second to last one)."""
        return max(self.vision_layers - 1, 0)


class EditPlan(BaseModel):
    """
    Which editors exist and where they act.

    Layer indices are 1-based. Decoder spans are counted from the first
    textual position of the fused sequence, over the prompt only.
    """

    model_config = ConfigDict(extra="forbid")

    visual_layers: List[int] = Field(default_factory=lambda: [1, 2, 3])
    visual_rank: int = Field(6, ge=1)
    cross_modality: bool = True
    decoder_layers: List[int] = Field(default_factory=lambda: [1, 2, 3, 4])
    multimodal_rank: int = Field(4, ge=1)
    prefix_len: int = Field(4, ge=0)
    suffix_len: int = Field(4, ge=0)
    control_token_index: Optional[int] = Field(None, ge=0)
    roi_only: bool = False
    infix: bool = False

    @field_validator("visual_layers", "decoder_layers")
    @classmethod
    def _sorted_unique(cls, layers: List[int]) -> List[int]:
        if any(layer < 1 for layer in layers):
            raise ValueError(f"layer indices are 1-based, got {layers}")
        return sorted(set(layers))

    @property
    def cross_rank(self) -> int:
        """Cross-modality rank is tied to the visual rank."""
        return self.visual_rank

    @classmethod
    def none(cls) -> "EditPlan":
        """A plan with no editors at all."""
        return cls(visual_layers=[], cross_modality=False, decoder_layers=[], prefix_len=0, suffix_len=0)

    def validate_for(self, config: ToyModelConfig) -> None:
        """
        Check the plan against model depth and widths.

        Raises:
            ConfigError: final vision layer edited, index out of depth, or rank above width
        """
        if config.vision_layers in self.visual_layers:
            raise ConfigError(
                f"visual_layers contains the final vision layer {config.vision_layers}; "
                f"its output is never read, editable layers are 1..{config.readout_layer}"
            )
        bad_visual = [layer for layer in self.visual_layers if layer > config.readout_layer]
        if bad_visual:
            raise ConfigError(f"visual_layers {bad_visual} exceed the encoder depth {config.vision_layers}")
        bad_decoder = [layer for layer in self.decoder_layers if layer > config.decoder_layers]
        if bad_decoder:
            raise ConfigError(f"decoder_layers {bad_decoder} exceed the decoder depth {config.decoder_layers}")
        if self.visual_layers and self.visual_rank > config.d_v:
            raise ConfigError(f"visual_rank={self.visual_rank} exceeds d_v={config.d_v}")
        if self.cross_modality and self.cross_rank > config.d_t:
            raise ConfigError(f"cross-modality rank {self.cross_rank} exceeds d_t={config.d_t}")
        if self.decoder_layers and self.multimodal_rank > config.d_t:
            raise ConfigError(f"multimodal_rank={self.multimodal_rank} exceeds d_t={config.d_t}")
