"""Threshold-based selection of candidate blocks for objects and background.

A block qualifies for an object when its directed score against every other
present category strictly exceeds t_obj (average score when the object is
alone in the prompt). Background blocks need strictly low average scores for
every present category. Empty results optionally fall back to the best-ranked
blocks so composition never stalls; fallback sets are flagged as relaxed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .database import BlockDatabase

ROLE_OBJECT = "object"
ROLE_BACKGROUND = "background"


@dataclass(frozen=True)
class SelectionConfig:
    """Selection thresholds; defaults follow the pipeline defaults."""

    t_obj: float = 0.5
    t_bg: float = 0.1

    def __post_init__(self):
        for name in ("t_obj", "t_bg"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must be within [0, 1], got {value}")


@dataclass(frozen=True)
class CandidateSet:
    """Blocks eligible for one role.

    relaxed is True when the thresholds admitted nothing and the set was
    filled by rank instead; non-relaxed sets satisfy the thresholds strictly.
    """

    role: str
    category: str | None
    blocks: tuple[tuple[int, int], ...]
    relaxed: bool = field(default=False)

    def __len__(self) -> int:
        return len(self.blocks)


def _check_present(db: BlockDatabase, present) -> list[str]:
    present = set(present)
    unknown = present - set(db.categories)
    if unknown:
        raise ValueError(f"categories not in database: {sorted(unknown)}")
    # db.categories order keeps downstream iteration deterministic
    return [c for c in db.categories if c in present]


def _mask_blocks(mask: np.ndarray) -> tuple[tuple[int, int], ...]:
    return tuple((int(i), int(b)) for i, b in np.argwhere(mask))


def _ranked_blocks(key: np.ndarray, count: int, descending: bool) -> tuple[tuple[int, int], ...]:
    flat = key.ravel()
    order = np.argsort(-flat if descending else flat, kind="stable")
    picked = order[: min(count, flat.size)]
    return tuple((int(ix) // key.shape[1], int(ix) % key.shape[1]) for ix in picked)


def select_object_blocks(db: BlockDatabase, target: str, present,
                         cfg: SelectionConfig | None = None,
                         fallback_size: int | None = None) -> CandidateSet:
    """Candidate blocks for one object category.

    Args:
        db: block database holding scores for every present category.
        target: the category being placed; must belong to present.
        present: all categories appearing in the layout.
        cfg: thresholds (defaults if omitted).
        fallback_size: region area in cells; when given and the strict set is
            empty, the top-ceil(fallback_size) blocks by ranking key are
            returned with relaxed=True and a warning.

    Returns:
        CandidateSet with role "object"; blocks ordered by (image_id,
        grid_index) for strict sets, by descending rank for relaxed sets.
    """
    cfg = cfg or SelectionConfig()
    ordered = _check_present(db, present)
    if target not in ordered:
        raise ValueError(f"target {target!r} not among present categories {sorted(set(present))}")

    contrasts = [c for c in ordered if c != target]
    if contrasts:
        stacked = np.stack([db.entry_scores(target, c) for c in contrasts])
        mask = np.all(stacked > cfg.t_obj, axis=0)
        key = stacked.min(axis=0)
    else:
        key = db.average_matrix(target)
        mask = key > cfg.t_obj

    blocks = _mask_blocks(mask)
    relaxed = False
    if not blocks and fallback_size is not None:
        blocks = _ranked_blocks(key, math.ceil(fallback_size), descending=True)
        relaxed = True
        warnings.warn(
            f"no blocks exceed t_obj={cfg.t_obj} for {target!r}; "
            f"relaxed to top {len(blocks)} by rank",
            stacklevel=2,
        )
    return CandidateSet(ROLE_OBJECT, target, blocks, relaxed)


def select_background_blocks(db: BlockDatabase, present,
                             cfg: SelectionConfig | None = None,
                             fallback_size: int | None = None) -> CandidateSet:
    """Candidate blocks for the background role.

    A block qualifies when its average score is strictly below t_bg for every
    present category. An empty present set admits every block (no condition
    to violate). Fallback ranks ascending by the worst-case average.
    """
    cfg = cfg or SelectionConfig()
    ordered = _check_present(db, present)

    if ordered:
        stacked = np.stack([db.average_matrix(c) for c in ordered])
        mask = np.all(stacked < cfg.t_bg, axis=0)
        key = stacked.max(axis=0)
    else:
        mask = np.ones((db.n_images, db.blocks.shape[1]), dtype=bool)
        key = np.zeros_like(mask, dtype=np.float32)

    blocks = _mask_blocks(mask)
    relaxed = False
    if not blocks and fallback_size is not None:
        blocks = _ranked_blocks(key, math.ceil(fallback_size), descending=False)
        relaxed = True
        warnings.warn(
            f"no blocks fall below t_bg={cfg.t_bg} for all of {ordered}; "
            f"relaxed to bottom {len(blocks)} by rank",
            stacklevel=2,
        )
    return CandidateSet(ROLE_BACKGROUND, None, blocks, relaxed)
