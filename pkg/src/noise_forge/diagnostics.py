"""Normality diagnostics and heatmap rendering for noise images.

A composed image is a patchwork of standard-normal blocks picked by score,
so its value distribution can drift away from the standard normal. The
report quantifies that drift with the exact one-sample Kolmogorov-Smirnov
statistic plus moment summaries, and counts duplicated source blocks from a
provenance map when one is available.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image
from scipy.special import ndtr

from .grid import CELLS, GRID_SIDE, NoiseImage

MID_GRAY = 128


@dataclass(frozen=True)
class NormalityReport:
    mean: float
    std: float
    ks_statistic: float
    duplicate_blocks: int
    per_channel_mean: tuple[float, ...]
    per_channel_std: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "ks_statistic": self.ks_statistic,
            "duplicate_blocks": self.duplicate_blocks,
            "per_channel_mean": list(self.per_channel_mean),
            "per_channel_std": list(self.per_channel_std),
        }


def ks_statistic(values: np.ndarray) -> float:
    """Exact one-sample KS statistic of values against the standard normal.

    D = max over order statistics x_(i) of
        max(F(x_(i)) - (i-1)/n, i/n - F(x_(i)))
    with F the standard normal CDF.
    """
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if x.size == 0:
        raise ValueError("need at least one value")
    n = x.size
    cdf = ndtr(x)
    steps = np.arange(n, dtype=np.float64)
    below = cdf - steps / n
    above = (steps + 1.0) / n - cdf
    return float(max(below.max(), above.max()))


def normality_report(image: NoiseImage, provenance: Iterable | None = None) -> NormalityReport:
    """Distribution summary of an image, with duplicate counting.

    Args:
        image: the image to summarize.
        provenance: optional 256-cell provenance (objects with image/block
            attributes); duplicate_blocks is 256 minus the number of distinct
            (image, block) sources, or 0 when omitted.
    """
    values = np.asarray(image.data, dtype=np.float64)
    duplicates = 0
    if provenance is not None:
        sources = {(p.image, p.block) for p in provenance}
        duplicates = CELLS - len(sources)
    return NormalityReport(
        mean=float(values.mean()),
        std=float(values.std()),
        ks_statistic=ks_statistic(values),
        duplicate_blocks=duplicates,
        per_channel_mean=tuple(float(values[c].mean()) for c in range(image.channels)),
        per_channel_std=tuple(float(values[c].std()) for c in range(image.channels)),
    )


def render_heatmap(score_map: np.ndarray, out_path, cell_size: int = 16) -> None:
    """Renders a 16x16 map as a grayscale raster, min black, max white.

    Each grid cell becomes a cell_size x cell_size pixel square. Constant
    maps render uniform mid-gray.
    """
    score_map = np.asarray(score_map, dtype=np.float64)
    if score_map.shape != (GRID_SIDE, GRID_SIDE):
        raise ValueError(f"expected a {GRID_SIDE}x{GRID_SIDE} map, got shape {score_map.shape}")
    if not np.all(np.isfinite(score_map)):
        raise ValueError("heatmap values must be finite")
    if cell_size < 1:
        raise ValueError(f"cell_size must be positive, got {cell_size}")

    lo = score_map.min()
    hi = score_map.max()
    if hi > lo:
        levels = np.round((score_map - lo) / (hi - lo) * 255.0)
    else:
        levels = np.full_like(score_map, MID_GRAY)
    pixels = np.kron(levels.astype(np.uint8), np.ones((cell_size, cell_size), dtype=np.uint8))
    Image.fromarray(pixels, mode="L").save(Path(out_path))
