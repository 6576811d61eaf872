"""Grid geometry shared by the whole pipeline.

A noise image is a C x 64 x 64 tensor carved into a 16 x 16 grid of
4 x 4 pixel blocks. Grid cells are indexed row-major: index = 16*row + col.
Layout bounding boxes live on a pixel canvas (512 px square by default) and
are mapped onto the block grid by majority overlap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IMAGE_SIDE = 64
BLOCK_SIDE = 4
GRID_SIDE = 16
CELLS = GRID_SIDE * GRID_SIDE
DEFAULT_CHANNELS = 4
DEFAULT_CANVAS = 512


def _locked(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float32)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class NoiseImage:
    """A C x 64 x 64 noise tensor, the unit blocks are harvested from."""

    data: np.ndarray
    image_id: int = 0
    source_seed: int | None = None

    def __post_init__(self):
        arr = _locked(self.data)
        if arr.ndim != 3 or arr.shape[1:] != (IMAGE_SIDE, IMAGE_SIDE):
            raise ValueError(f"noise image must be (C, 64, 64), got {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("noise image needs at least one channel")
        if not np.all(np.isfinite(arr)):
            raise ValueError("noise image contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])


@dataclass(frozen=True)
class PixelBlock:
    """A C x 4 x 4 sub-tensor with its provenance inside the source image."""

    data: np.ndarray
    source_image: int
    grid_index: int

    def __post_init__(self):
        arr = _locked(self.data)
        if arr.ndim != 3 or arr.shape[1:] != (BLOCK_SIDE, BLOCK_SIDE):
            raise ValueError(f"pixel block must be (C, 4, 4), got {arr.shape}")
        if not 0 <= self.grid_index < CELLS:
            raise ValueError(f"grid_index {self.grid_index} outside [0, {CELLS})")
        object.__setattr__(self, "data", arr)

    @property
    def row(self) -> int:
        return self.grid_index // GRID_SIDE

    @property
    def col(self) -> int:
        return self.grid_index % GRID_SIDE


@dataclass(frozen=True)
class GridRegion:
    """A set of distinct grid cell indices on the 16 x 16 grid."""

    cells: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        cells = frozenset(int(c) for c in self.cells)
        if any(c < 0 or c >= CELLS for c in cells):
            raise ValueError("grid cells must lie in [0, 256)")
        object.__setattr__(self, "cells", cells)

    def area(self) -> int:
        return len(self.cells)

    def sorted_cells(self) -> list[int]:
        return sorted(self.cells)


def sample_noise(seed: int, count: int, channels: int = DEFAULT_CHANNELS) -> list[NoiseImage]:
    """Draw `count` seeded standard-normal noise images.

    One generator stream fills images in id order, so image k is identical
    for every count > k (databases built with fewer images are prefixes of
    larger ones drawn from the same seed).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if channels < 1:
        raise ValueError("channels must be >= 1")
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((count, channels, IMAGE_SIDE, IMAGE_SIDE), dtype=np.float32)
    return [NoiseImage(draws[i], image_id=i, source_seed=seed) for i in range(count)]


def extract_blocks(image: NoiseImage) -> list[PixelBlock]:
    """Split an image into its 256 pixel blocks, ordered by grid index."""
    blocks = []
    for idx in range(CELLS):
        r, c = divmod(idx, GRID_SIDE)
        sub = image.data[:, r * BLOCK_SIDE:(r + 1) * BLOCK_SIDE, c * BLOCK_SIDE:(c + 1) * BLOCK_SIDE]
        blocks.append(PixelBlock(sub, source_image=image.image_id, grid_index=idx))
    return blocks


def assemble_blocks(cell_data: list[np.ndarray]) -> np.ndarray:
    """Place 256 (C, 4, 4) arrays back onto a (C, 64, 64) canvas by grid index."""
    if len(cell_data) != CELLS:
        raise ValueError(f"need exactly {CELLS} blocks, got {len(cell_data)}")
    channels = cell_data[0].shape[0]
    out = np.empty((channels, IMAGE_SIDE, IMAGE_SIDE), dtype=np.float32)
    for idx, block in enumerate(cell_data):
        r, c = divmod(idx, GRID_SIDE)
        out[:, r * BLOCK_SIDE:(r + 1) * BLOCK_SIDE, c * BLOCK_SIDE:(c + 1) * BLOCK_SIDE] = block
    return out


def flatten_cells(data: np.ndarray) -> np.ndarray:
    """View a (C, 64, 64) tensor as (256, C*16) flattened blocks in grid order."""
    channels = data.shape[0]
    folded = data.reshape(channels, GRID_SIDE, BLOCK_SIDE, GRID_SIDE, BLOCK_SIDE)
    # axes: channel, row, in-row, col, in-col -> row, col, channel, in-row, in-col
    return folded.transpose(1, 3, 0, 2, 4).reshape(CELLS, channels * BLOCK_SIDE * BLOCK_SIDE)


def check_bbox(bbox, canvas: int) -> tuple[float, float, float, float]:
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise ValueError(f"bbox {bbox} has non-positive extent")
    if x < 0 or y < 0 or x + w > canvas or y + h > canvas:
        raise ValueError(f"bbox {bbox} extends beyond the {canvas} px canvas")
    return x, y, w, h


def majority_cells(bbox, canvas: int) -> frozenset[int]:
    """Cells whose pixel area overlaps the box by at least 50%."""
    x, y, w, h = check_bbox(bbox, canvas)
    cell = canvas / GRID_SIDE
    half = 0.5 * cell * cell
    hits = []
    for idx in range(CELLS):
        r, c = divmod(idx, GRID_SIDE)
        ox = max(0.0, min(x + w, (c + 1) * cell) - max(x, c * cell))
        oy = max(0.0, min(y + h, (r + 1) * cell) - max(y, r * cell))
        if ox * oy >= half:
            hits.append(idx)
    return frozenset(hits)


def box_to_grid(bbox, canvas: int = DEFAULT_CANVAS) -> GridRegion:
    """Map a pixel box [x, y, w, h] onto the block grid.

    A cell is included when at least half of its pixel area lies inside the
    box; a box too small to claim any cell falls back to the single cell
    containing its center, so the result is never empty.
    """
    cells = majority_cells(bbox, canvas)
    if not cells:
        x, y, w, h = check_bbox(bbox, canvas)
        cell = canvas / GRID_SIDE
        col = min(GRID_SIDE - 1, int((x + w / 2) / cell))
        row = min(GRID_SIDE - 1, int((y + h / 2) / cell))
        cells = frozenset([GRID_SIDE * row + col])
    return GridRegion(cells)
