"""Threshold sensitivity sweeps over composition diagnostics.

For each (t_obj, t_bg) grid cell the sweep composes every layout under
deterministic per-cell seeds and reports mean duplicate counts, mean KS
statistics, and mean strict candidate-set sizes. Strict sizes (no fallback)
make the object column non-increasing in t_obj and the background column
non-decreasing in t_bg.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .compose import LayoutGuidance, compose_initial_image
from .database import BlockDatabase
from .diagnostics import normality_report
from .selection import SelectionConfig, select_background_blocks, select_object_blocks


def _cell_seed(base_seed: int, cell: int, rep: int, layout_index: int) -> int:
    seq = np.random.SeedSequence([base_seed, cell, rep, layout_index])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def run_sweep(db: BlockDatabase, layouts: Sequence[LayoutGuidance],
              t_obj_values: Sequence[float], t_bg_values: Sequence[float] = (0.1,),
              seeds: int = 1, base_seed: int = 0) -> list[dict]:
    """Composes all layouts per grid cell and aggregates diagnostics.

    Args:
        db: block database.
        layouts: layouts to compose; an empty list yields an empty table.
        t_obj_values / t_bg_values: threshold grid (row-major, t_obj outer).
        seeds: repetitions per (cell, layout), each with its own derived seed.
        base_seed: root of the per-cell seed derivation.

    Returns:
        one row per grid cell with the parameter values and mean metrics.
    """
    if not layouts:
        return []
    if not t_obj_values or not t_bg_values:
        raise ValueError("threshold grid must be nonempty on both axes")
    if seeds < 1:
        raise ValueError(f"seeds must be >= 1, got {seeds}")

    rows = []
    cell = 0
    for t_obj in t_obj_values:
        for t_bg in t_bg_values:
            cfg = SelectionConfig(t_obj=float(t_obj), t_bg=float(t_bg))
            duplicate_counts: list[int] = []
            ks_values: list[float] = []
            object_sizes: list[int] = []
            background_sizes: list[int] = []
            for layout_index, layout in enumerate(layouts):
                present = layout.categories()
                for obj in layout.objects:
                    object_sizes.append(
                        len(select_object_blocks(db, obj.category, present, cfg))
                    )
                background_sizes.append(len(select_background_blocks(db, present, cfg)))
                for rep in range(seeds):
                    composed = compose_initial_image(
                        db, layout, cfg,
                        seed=_cell_seed(base_seed, cell, rep, layout_index),
                    )
                    report = normality_report(composed.image, composed.provenance)
                    duplicate_counts.append(report.duplicate_blocks)
                    ks_values.append(report.ks_statistic)
            rows.append({
                "t_obj": float(t_obj),
                "t_bg": float(t_bg),
                "mean_duplicate_blocks": float(np.mean(duplicate_counts)),
                "mean_ks_statistic": float(np.mean(ks_values)),
                "mean_object_candidates": float(np.mean(object_sizes)),
                "mean_background_candidates": float(np.mean(background_sizes)),
            })
            cell += 1
    return rows
