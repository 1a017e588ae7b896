"""
Procedural glyph images

Each class is a fixed 5x5 glyph drawn at a seeded position on a noisy
grayscale canvas. The RoI is the set of patches that contain glyph pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.errors import ConfigError

_GLYPH_ART = [
    # plus
    """
    ..#..
    ..#..
    #####
    ..#..
    ..#..
    """,
    # ring
    """
    .###.
    #...#
    #...#
    #...#
    .###.
    """,
    # x
    """
    #...#
    .#.#.
    ..#..
    .#.#.
    #...#
    """,
    # t
    """
    #####
    ..#..
    ..#..
    ..#..
    ..#..
    """,
    # l
    """
    #....
    #....
    #....
    #....
    #####
    """,
    # horizontal bars
    """
    #####
    .....
    #####
    .....
    #####
    """,
    # vertical bars
    """
    #.#.#
    #.#.#
    #.#.#
    #.#.#
    #.#.#
    """,
    # diagonal
    """
    #....
    .#...
    ..#..
    ...#.
    ....#
    """,
    # u
    """
    #...#
    #...#
    #...#
    #...#
    #####
    """,
    # checker
    """
    #.#.#
    .#.#.
    #.#.#
    .#.#.
    #.#.#
    """,
]

GLYPHS = [
    np.array([[ch == "#" for ch in row.strip()] for row in art.strip().splitlines()], dtype=bool)
    for art in _GLYPH_ART
]
NUM_CLASSES = len(GLYPHS)
GLYPH_SIZE = 5
NOISE_LEVEL = 0.2


@dataclass(frozen=True)
class SynthImage:
    pixels: np.ndarray
    class_id: int
    roi_patches: Tuple[int, ...]
    seed: int
    patch_size: int

    @property
    def num_patches(self) -> int:
        return (self.pixels.shape[0] // self.patch_size) * (self.pixels.shape[1] // self.patch_size)

    def roi_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_patches)
        mask[list(self.roi_patches)] = 1.0
        return mask


def glyph_patches(glyph_mask: np.ndarray, patch_size: int) -> Tuple[int, ...]:
    """Row-major indices of the patches holding at least one glyph pixel."""
    rows, cols = np.nonzero(glyph_mask)
    grid_w = glyph_mask.shape[1] // patch_size
    return tuple(sorted({int(r // patch_size) * grid_w + int(c // patch_size) for r, c in zip(rows, cols)}))


def gen_image(class_id: int, seed: int, image_size: int = 16, patch_size: int = 4) -> SynthImage:
    """
    Render class_id's glyph at a seeded position over seeded noise.

    Raises:
        ConfigError: if class_id is not in [0, 10) or the canvas cannot hold a glyph
    """
    if not 0 <= class_id < NUM_CLASSES:
        raise ConfigError(f"class_id must lie in [0, {NUM_CLASSES}), got {class_id}")
    if image_size < GLYPH_SIZE or image_size % patch_size != 0:
        raise ConfigError(f"image_size={image_size} must be >= {GLYPH_SIZE} and a multiple of patch_size={patch_size}")

    rng = np.random.default_rng(seed)
    pixels = rng.uniform(0.0, NOISE_LEVEL, size=(image_size, image_size))
    top, left = rng.integers(0, image_size - GLYPH_SIZE + 1, size=2)
    glyph_mask = np.zeros((image_size, image_size), dtype=bool)
    glyph_mask[top:top + GLYPH_SIZE, left:left + GLYPH_SIZE] = GLYPHS[class_id]
    pixels[glyph_mask] = 1.0
    pixels.setflags(write=False)
    return SynthImage(
        pixels=pixels,
        class_id=class_id,
        roi_patches=glyph_patches(glyph_mask, patch_size),
        seed=seed,
        patch_size=patch_size,
    )
