"""
Frozen base weights

Named float64 arrays for the vision encoder, projector and decoder.
Every array is flagged read-only, so the frozen contract is enforced by
numpy itself: an in-place write raises instead of silently training the base.
"""

from __future__ import annotations

import hashlib
from typing import Dict, Iterator, List, Mapping, Tuple

import numpy as np

from src.errors import DimensionError
from src.model.config import ToyModelConfig

Shape = Tuple[int, ...]


def _block_shapes(prefix: str, d: int, hidden: int) -> List[Tuple[str, Shape]]:
    return [
        (f"{prefix}.ln1.gain", (d,)),
        (f"{prefix}.ln1.bias", (d,)),
        (f"{prefix}.attn.wq", (d, d)),
        (f"{prefix}.attn.bq", (d,)),
        (f"{prefix}.attn.wk", (d, d)),
        (f"{prefix}.attn.bk", (d,)),
        (f"{prefix}.attn.wv", (d, d)),
        (f"{prefix}.attn.bv", (d,)),
        (f"{prefix}.attn.wo", (d, d)),
        (f"{prefix}.attn.bo", (d,)),
        (f"{prefix}.ln2.gain", (d,)),
        (f"{prefix}.ln2.bias", (d,)),
        (f"{prefix}.mlp.w1", (d, hidden)),
        (f"{prefix}.mlp.b1", (hidden,)),
        (f"{prefix}.mlp.w2", (hidden, d)),
        (f"{prefix}.mlp.b2", (d,)),
    ]


def weight_shapes(config: ToyModelConfig) -> List[Tuple[str, Shape]]:
    """Every base tensor as (name, shape), in a fixed order."""
    d_v, d_t = config.d_v, config.d_t
    shapes: List[Tuple[str, Shape]] = [
        ("vision.patch_embed.weight", (config.patch_size ** 2, d_v)),
        ("vision.patch_embed.bias", (d_v,)),
        ("vision.pos_embed", (config.num_patches, d_v)),
    ]
    for layer in range(1, config.vision_layers + 1):
        shapes += _block_shapes(f"vision.layers.{layer}", d_v, d_v * config.mlp_ratio)
    shapes += [
        ("projector.weight", (d_v, d_t)),
        ("projector.bias", (d_t,)),
        ("decoder.token_embed", (config.vocab_size, d_t)),
        ("decoder.pos_embed", (config.max_seq, d_t)),
    ]
    for layer in range(1, config.decoder_layers + 1):
        shapes += _block_shapes(f"decoder.layers.{layer}", d_t, d_t * config.mlp_ratio)
    shapes += [
        ("decoder.ln_f.gain", (d_t,)),
        ("decoder.ln_f.bias", (d_t,)),
        ("decoder.head.weight", (d_t, config.vocab_size)),
        ("decoder.head.bias", (config.vocab_size,)),
    ]
    return shapes


class FrozenWeights(Mapping[str, np.ndarray]):
    """
    Read-only mapping name -> array.

    Usage:
        weights = init_weights(ToyModelConfig(), seed=0)
        before = weights.digest()
        ...
        assert weights.digest() == before
    """

    def __init__(self, arrays: Mapping[str, np.ndarray]):
        self._arrays: Dict[str, np.ndarray] = {}
        for name, value in arrays.items():
            array = np.array(value, dtype=np.float64, copy=True)
            array.setflags(write=False)
            self._arrays[name] = array

    def __reduce__(self):
        # unpickled arrays come back writable; rebuild through __init__
        return (FrozenWeights, (self._arrays,))

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def param_count(self) -> int:
        return int(sum(array.size for array in self._arrays.values()))

    def digest(self) -> str:
        """SHA-256 over names, shapes and raw bytes."""
        h = hashlib.sha256()
        for name in sorted(self._arrays):
            array = self._arrays[name]
            h.update(name.encode("utf-8"))
            h.update(repr(array.shape).encode("utf-8"))
            h.update(np.ascontiguousarray(array).tobytes())
        return h.hexdigest()

    def check_shapes(self, config: ToyModelConfig) -> None:
        """
        Raises:
            DimensionError: naming the first tensor that is missing or mis-shaped
        """
        for name, shape in weight_shapes(config):
            if name not in self._arrays:
                raise DimensionError(f"base tensor '{name}' is missing, expected shape {shape}")
            if self._arrays[name].shape != shape:
                raise DimensionError(
                    f"base tensor '{name}' has shape {self._arrays[name].shape}, expected {shape}"
                )


def init_weights(config: ToyModelConfig, seed: int) -> FrozenWeights:
    """
    Fresh base weights.

    Matrices and embeddings ~ N(0, init_std); biases 0; layernorm gains 1.
    """
    rng = np.random.default_rng(seed)
    arrays: Dict[str, np.ndarray] = {}
    for name, shape in weight_shapes(config):
        if name.endswith(".gain"):
            arrays[name] = np.ones(shape)
        elif len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.normal(0.0, config.init_std, size=shape)
    return FrozenWeights(arrays)
