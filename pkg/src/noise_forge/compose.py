"""Assembly of tailored initial noise images from layout guidance.

Objects are painted onto the 16x16 grid from large to small (user-overridable
order); each region draws its blocks from the object's candidate set, without
replacement when candidates suffice and with replacement otherwise. Later
paints overwrite earlier ones, remaining cells are filled from the background
set, and a provenance map records the final occupant of every cell.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .database import BlockDatabase, CorruptHeaderError, TruncatedPayloadError
from .grid import (
    CELLS,
    DEFAULT_CANVAS,
    IMAGE_SIDE,
    NoiseImage,
    assemble_blocks,
    box_to_grid,
    check_bbox,
)
from .selection import (
    CandidateSet,
    SelectionConfig,
    select_background_blocks,
    select_object_blocks,
)

BACKGROUND_ROLE = "background"

# entropy tags keeping object, background, and batch seed streams disjoint
_TAG_OBJECT = 1
_TAG_BACKGROUND = 2


@dataclass(frozen=True)
class LayoutObject:
    category: str
    bbox: tuple[float, float, float, float]

    def __post_init__(self):
        if not self.category or not self.category.strip():
            raise ValueError("layout object category must be nonempty")
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))


@dataclass(frozen=True)
class LayoutGuidance:
    """Ordered (category, bbox) regions on a square pixel canvas."""

    objects: tuple[LayoutObject, ...]
    canvas: int = DEFAULT_CANVAS
    explicit_order: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.canvas < 1:
            raise ValueError(f"canvas must be positive, got {self.canvas}")
        for obj in self.objects:
            check_bbox(obj.bbox, self.canvas)
        if self.explicit_order is not None:
            object.__setattr__(self, "explicit_order", tuple(int(i) for i in self.explicit_order))

    def categories(self) -> set[str]:
        return {obj.category for obj in self.objects}


@dataclass(frozen=True)
class CellProvenance:
    """Database block occupying one grid cell and the role it serves."""

    image: int
    block: int
    role: int | str  # object index within the layout, or "background"


@dataclass(frozen=True)
class ComposedImage:
    image: NoiseImage
    provenance: tuple[CellProvenance, ...]
    compose_seed: int
    layout: LayoutGuidance

    def __post_init__(self):
        if len(self.provenance) != CELLS:
            raise ValueError(f"provenance must cover all {CELLS} cells")


def layout_from_dict(doc: dict) -> LayoutGuidance:
    """Builds a LayoutGuidance from its JSON-dict form."""
    if not isinstance(doc, dict) or "objects" not in doc:
        raise ValueError("layout document must be an object with an 'objects' list")
    objects = []
    for entry in doc["objects"]:
        try:
            objects.append(LayoutObject(entry["category"], tuple(entry["bbox"])))
        except (TypeError, KeyError) as exc:
            raise ValueError(f"malformed layout object {entry!r}: {exc}") from None
    order = doc.get("order")
    return LayoutGuidance(
        objects=tuple(objects),
        canvas=int(doc.get("canvas", DEFAULT_CANVAS)),
        explicit_order=tuple(order) if order is not None else None,
    )


def layout_to_dict(layout: LayoutGuidance) -> dict:
    doc = {
        "canvas": layout.canvas,
        "objects": [{"category": o.category, "bbox": list(o.bbox)} for o in layout.objects],
    }
    if layout.explicit_order is not None:
        doc["order"] = list(layout.explicit_order)
    return doc


def grid_areas(layout: LayoutGuidance) -> list[int]:
    """Grid-cell area of each object's region, in input order."""
    return [len(box_to_grid(o.bbox, layout.canvas).cells) for o in layout.objects]


def paint_order(layout: LayoutGuidance) -> list[int]:
    """Painting order of object indices: large regions first, stable ties.

    An explicit order on the layout wins; it must be a permutation of the
    object indices.
    """
    n = len(layout.objects)
    if layout.explicit_order is not None:
        if sorted(layout.explicit_order) != list(range(n)):
            raise ValueError(
                f"explicit order {list(layout.explicit_order)} is not a permutation of 0..{n - 1}"
            )
        return list(layout.explicit_order)
    areas = grid_areas(layout)
    return sorted(range(n), key=lambda i: -areas[i])


def _draw(rng: np.random.Generator, candidates: CandidateSet, count: int) -> list[tuple[int, int]]:
    # without replacement exactly when the candidate pool suffices
    pool = len(candidates.blocks)
    picks = rng.choice(pool, size=count, replace=pool < count)
    return [candidates.blocks[int(p)] for p in picks]


def compose_initial_image(db: BlockDatabase, layout: LayoutGuidance,
                          cfg: SelectionConfig | None = None,
                          seed: int = 0) -> ComposedImage:
    """Assembles the initial noise image for a layout.

    Args:
        db: block database covering every layout category.
        layout: guidance regions; all categories must exist in db.
        cfg: selection thresholds (defaults if omitted).
        seed: nonnegative composition seed; each region draws from its own
            child stream keyed by object index, so reordering or adding
            regions does not reshuffle the draws of unrelated regions.

    Returns:
        ComposedImage whose provenance records the final occupant of each of
        the 256 cells.
    """
    cfg = cfg or SelectionConfig()
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    unknown = layout.categories() - set(db.categories)
    if unknown:
        raise ValueError(f"layout categories not in database: {sorted(unknown)}")

    present = layout.categories()
    assignment: dict[int, CellProvenance] = {}
    for idx in paint_order(layout):
        obj = layout.objects[idx]
        cells = box_to_grid(obj.bbox, layout.canvas).sorted_cells()
        candidates = select_object_blocks(db, obj.category, present, cfg,
                                          fallback_size=len(cells))
        rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_OBJECT, idx]))
        for cell, (img, blk) in zip(cells, _draw(rng, candidates, len(cells))):
            assignment[cell] = CellProvenance(img, blk, idx)

    remaining = [c for c in range(CELLS) if c not in assignment]
    if remaining:
        candidates = select_background_blocks(db, present, cfg, fallback_size=len(remaining))
        rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_BACKGROUND]))
        for cell, (img, blk) in zip(remaining, _draw(rng, candidates, len(remaining))):
            assignment[cell] = CellProvenance(img, blk, BACKGROUND_ROLE)

    provenance = tuple(assignment[c] for c in range(CELLS))
    data = assemble_blocks([db.block_data(p.image, p.block) for p in provenance])
    return ComposedImage(
        image=NoiseImage(data, image_id=0, source_seed=None),
        provenance=provenance,
        compose_seed=seed,
        layout=layout,
    )


def _pair_paths(prefix) -> tuple[Path, Path]:
    prefix = Path(prefix)
    # plain concatenation; with_suffix would eat dots inside the prefix
    return (prefix.parent / (prefix.name + ".bin"),
            prefix.parent / (prefix.name + ".json"))


def save_composed(composed: ComposedImage, prefix) -> None:
    """Writes <prefix>.bin (float32 LE, [channel][row][col]) and <prefix>.json."""
    bin_path, sidecar_path = _pair_paths(prefix)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(composed.image.data, dtype="<f4").tobytes()
    sidecar = {
        "channels": composed.image.channels,
        "shape": [IMAGE_SIDE, IMAGE_SIDE],
        "seed": composed.compose_seed,
        "layout": layout_to_dict(composed.layout),
        "provenance": [
            {"img": p.image, "blk": p.block, "role": p.role} for p in composed.provenance
        ],
    }
    bin_path.write_bytes(payload)
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def load_composed(prefix) -> ComposedImage:
    """Reads a composed image pair written by save_composed.

    Raises CorruptHeaderError for a missing/malformed sidecar and
    TruncatedPayloadError when the binary payload size disagrees with it.
    """
    bin_path, sidecar_path = _pair_paths(prefix)
    try:
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CorruptHeaderError(f"missing sidecar {sidecar_path}") from None
    except json.JSONDecodeError as exc:
        raise CorruptHeaderError(f"{sidecar_path}: malformed JSON ({exc})") from None

    required = ("channels", "shape", "seed", "layout", "provenance")
    missing = [k for k in required if k not in sidecar]
    if missing:
        raise CorruptHeaderError(f"{sidecar_path}: missing keys {missing}")
    if sidecar["shape"] != [IMAGE_SIDE, IMAGE_SIDE]:
        raise CorruptHeaderError(f"{sidecar_path}: unsupported shape {sidecar['shape']}")
    if len(sidecar["provenance"]) != CELLS:
        raise CorruptHeaderError(
            f"{sidecar_path}: provenance has {len(sidecar['provenance'])} entries, expected {CELLS}"
        )

    channels = int(sidecar["channels"])
    try:
        payload = bin_path.read_bytes()
    except FileNotFoundError:
        raise TruncatedPayloadError(f"missing payload {bin_path}") from None
    expected = channels * IMAGE_SIDE * IMAGE_SIDE * 4
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"{bin_path}: expected {expected} bytes, found {len(payload)}"
        )

    data = np.frombuffer(payload, dtype="<f4").reshape(channels, IMAGE_SIDE, IMAGE_SIDE).copy()
    try:
        provenance = tuple(
            CellProvenance(int(p["img"]), int(p["blk"]), p["role"])
            for p in sidecar["provenance"]
        )
        layout = layout_from_dict(sidecar["layout"])
    except (TypeError, KeyError, ValueError) as exc:
        raise CorruptHeaderError(f"{sidecar_path}: malformed sidecar ({exc})") from None

    return ComposedImage(
        image=NoiseImage(data, image_id=0, source_seed=None),
        provenance=provenance,
        compose_seed=int(sidecar["seed"]),
        layout=layout,
    )
