"""Layout-control evaluation: IoU against guidance, success rates, buckets.

Guidance objects are matched to same-category detections greedily by
descending IoU (each detection used at most once); an object succeeds when
its matched IoU strictly exceeds 0.5. Objects are bucketed by guidance-box
pixel area into s (< 150^2), l (> 300^2), and m (everything else, boundaries
inclusive). COCO-style annotation/caption files can be ingested into layout
guidance, keeping only samples whose bbox categories are all mentioned in a
caption and rescaling boxes to the 512^2 canvas.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .compose import LayoutGuidance, LayoutObject
from .grid import DEFAULT_CANVAS

SMALL_AREA_LIMIT = 150 * 150
LARGE_AREA_LIMIT = 300 * 300
SUCCESS_IOU = 0.5

BUCKETS = ("s", "m", "l")


class CocoFormatError(ValueError):
    """An ingestion input file is missing or not parseable."""


@dataclass(frozen=True)
class Detection:
    category: str
    bbox: tuple[float, float, float, float]
    confidence: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ValueError(f"detection box must have positive size, got {self.bbox}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be within [0, 1], got {self.confidence}")


def iou(a, b) -> float:
    """Intersection over union of two [x, y, w, h] boxes."""
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def size_bucket(bbox) -> str:
    """s for area < 150^2, l for area > 300^2, m otherwise."""
    area = float(bbox[2]) * float(bbox[3])
    if area < SMALL_AREA_LIMIT:
        return "s"
    if area > LARGE_AREA_LIMIT:
        return "l"
    return "m"


def match_sample(layout: LayoutGuidance, detections: Sequence[Detection]) -> list[float]:
    """IoU achieved by each guidance object under greedy matching.

    Candidate (object, detection) pairs share a category and have positive
    IoU; they are claimed in descending IoU order with deterministic ties,
    each detection at most once. Unmatched objects score 0.
    """
    pairs = []
    for gi, obj in enumerate(layout.objects):
        for di, det in enumerate(detections):
            if det.category != obj.category:
                continue
            value = iou(obj.bbox, det.bbox)
            if value > 0.0:
                pairs.append((value, gi, di))
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))

    achieved = [0.0] * len(layout.objects)
    used_objects: set[int] = set()
    used_detections: set[int] = set()
    for value, gi, di in pairs:
        if gi in used_objects or di in used_detections:
            continue
        achieved[gi] = value
        used_objects.add(gi)
        used_detections.add(di)
    return achieved


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


@dataclass(frozen=True)
class EvalReport:
    mean_iou: float | None
    success_rate: float | None         # percent
    bucket_iou: dict
    bucket_rate: dict                  # percent
    counts: dict
    total_objects: int

    def to_dict(self) -> dict:
        return {
            "mean_iou": self.mean_iou,
            "success_rate": self.success_rate,
            "bucket_iou": dict(self.bucket_iou),
            "bucket_rate": dict(self.bucket_rate),
            "counts": dict(self.counts),
            "total_objects": self.total_objects,
        }

    def to_table(self) -> str:
        def fmt(value, percent=False):
            if value is None:
                return "-"
            return f"{value:.2f}" if percent else f"{value:.4f}"

        headers = ["IoU", "IoU_s", "IoU_m", "IoU_l", "R_suc", "R_s", "R_m", "R_l", "n"]
        row = [
            fmt(self.mean_iou),
            fmt(self.bucket_iou["s"]),
            fmt(self.bucket_iou["m"]),
            fmt(self.bucket_iou["l"]),
            fmt(self.success_rate, percent=True),
            fmt(self.bucket_rate["s"], percent=True),
            fmt(self.bucket_rate["m"], percent=True),
            fmt(self.bucket_rate["l"], percent=True),
            str(self.total_objects),
        ]
        widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
        line1 = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
        line2 = "  ".join(v.rjust(w) for v, w in zip(row, widths))
        return line1 + "\n" + line2


def evaluate(layouts: Mapping[str, LayoutGuidance],
             detections: Mapping[str, Sequence[Detection]]) -> EvalReport:
    """Aggregates matched IoU per guidance object across aligned samples.

    Args:
        layouts: sample id -> guidance.
        detections: sample id -> detections; ids must match layouts exactly.

    Returns:
        EvalReport with overall and per-bucket mean IoU and success rate
        (percent); buckets without objects report None.
    """
    mismatched = sorted(set(layouts) ^ set(detections))
    if mismatched:
        raise ValueError(f"sample ids do not align between layouts and detections: {mismatched}")

    all_ious: list[float] = []
    per_bucket: dict[str, list[float]] = {b: [] for b in BUCKETS}
    for sid in sorted(layouts):
        layout = layouts[sid]
        achieved = match_sample(layout, detections[sid])
        for obj, value in zip(layout.objects, achieved):
            all_ious.append(value)
            per_bucket[size_bucket(obj.bbox)].append(value)

    def rate(values: list[float]) -> float | None:
        if not values:
            return None
        return 100.0 * sum(1 for v in values if v > SUCCESS_IOU) / len(values)

    return EvalReport(
        mean_iou=_mean(all_ious),
        success_rate=rate(all_ious),
        bucket_iou={b: _mean(per_bucket[b]) for b in BUCKETS},
        bucket_rate={b: rate(per_bucket[b]) for b in BUCKETS},
        counts={b: len(per_bucket[b]) for b in BUCKETS},
        total_objects=len(all_ious),
    )


@dataclass(frozen=True)
class CocoSample:
    sample_id: str
    caption: str
    layout: LayoutGuidance


def _load_coco_json(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CocoFormatError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise CocoFormatError(f"{path}: malformed JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise CocoFormatError(f"{path}: expected a JSON object at top level")
    return doc


def _rescaled_box(bbox, width: float, height: float) -> tuple[float, float, float, float] | None:
    sx = DEFAULT_CANVAS / width
    sy = DEFAULT_CANVAS / height
    x = max(0.0, float(bbox[0]) * sx)
    y = max(0.0, float(bbox[1]) * sy)
    w = min(float(bbox[2]) * sx, DEFAULT_CANVAS - x)
    h = min(float(bbox[3]) * sy, DEFAULT_CANVAS - y)
    if w <= 0 or h <= 0:
        return None
    return (x, y, w, h)


def ingest_coco(annotations_path, captions_path) -> list[CocoSample]:
    """Filters and rescales COCO-style annotations into layout guidance.

    A sample is kept iff at least one of its captions mentions every bbox
    category (case-insensitive substring); the first such caption is kept
    with the sample. Boxes are rescaled onto the 512x512 canvas.
    """
    ann_doc = _load_coco_json(annotations_path)
    cap_doc = _load_coco_json(captions_path)
    try:
        images = {img["id"]: img for img in ann_doc["images"]}
        names = {cat["id"]: str(cat["name"]) for cat in ann_doc["categories"]}
        annotations = list(ann_doc["annotations"])
        caption_entries = list(cap_doc["annotations"])
    except (KeyError, TypeError) as exc:
        raise CocoFormatError(f"missing COCO structure: {exc}") from None

    boxes_by_image: dict = {}
    for ann in annotations:
        try:
            boxes_by_image.setdefault(ann["image_id"], []).append(
                (names[ann["category_id"]], ann["bbox"])
            )
        except (KeyError, TypeError) as exc:
            raise CocoFormatError(f"malformed annotation {ann!r}: {exc}") from None

    captions_by_image: dict = {}
    for entry in caption_entries:
        try:
            captions_by_image.setdefault(entry["image_id"], []).append(str(entry["caption"]))
        except (KeyError, TypeError) as exc:
            raise CocoFormatError(f"malformed caption entry {entry!r}: {exc}") from None

    samples = []
    for image_id, img in images.items():
        boxed = boxes_by_image.get(image_id)
        if not boxed:
            continue
        wanted = [name.lower() for name, _ in boxed]
        caption = next(
            (c for c in captions_by_image.get(image_id, ())
             if all(name in c.lower() for name in wanted)),
            None,
        )
        if caption is None:
            continue
        try:
            width = float(img["width"])
            height = float(img["height"])
        except (KeyError, TypeError) as exc:
            raise CocoFormatError(f"image record {image_id} lacks dimensions: {exc}") from None
        objects = []
        for name, bbox in boxed:
            scaled = _rescaled_box(bbox, width, height)
            if scaled is not None:
                objects.append(LayoutObject(name, scaled))
        if not objects:
            continue
        samples.append(CocoSample(
            sample_id=str(image_id),
            caption=caption,
            layout=LayoutGuidance(objects=tuple(objects), canvas=DEFAULT_CANVAS),
        ))
    return samples


def coco_to_layouts(annotations_path, captions_path) -> list[LayoutGuidance]:
    """Layout guidance for every sample kept by the caption filter."""
    return [sample.layout for sample in ingest_coco(annotations_path, captions_path)]
