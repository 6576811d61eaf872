"""Command-line surface for the noise-forge pipeline.

Subcommands: create-db, inspect-db, compose, stats, eval, ingest-coco,
render-heatmap, sweep. Exit codes: 0 success, 1 usage or configuration
error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .compose import (
    CellProvenance,
    compose_initial_image,
    layout_from_dict,
    layout_to_dict,
    save_composed,
)
from .config import ConfigError, parse_config
from .database import (
    DatabaseError,
    ScoringError,
    build_database,
    database_backend,
    images_from_database,
    load_database,
    save_database,
)
from .diagnostics import normality_report, render_heatmap
from .grid import IMAGE_SIDE, NoiseImage, sample_noise
from .layout_eval import CocoFormatError, Detection, evaluate, ingest_coco
from .scorer import SyntheticBackend
from .selection import SelectionConfig
from .sweep import run_sweep

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage failures exit with code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_categories(path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line.strip() for line in lines if line.strip()]


def _read_json_file(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CocoFormatError(f"{path}: malformed JSON ({exc})") from None


def _selection_config(cfg) -> SelectionConfig:
    return SelectionConfig(t_obj=cfg.t_obj, t_bg=cfg.t_bg)


def _cmd_create_db(args) -> int:
    cfg = parse_config(args.config, {
        "n_images": args.n,
        "channels": args.channels,
        "seed": args.seed,
        "backend_kind": args.backend,
        "backend_seed": args.backend_seed,
        "backend_d": args.backend_d,
    })
    categories = _read_categories(args.categories)

    if cfg.backend_kind == "import":
        if args.import_dir is None:
            raise ConfigError("--import-dir is required with --backend import")
        source = load_database(args.import_dir)
        backend = database_backend(source)
        images = images_from_database(source)
    else:
        backend = SyntheticBackend(seed=cfg.backend_seed, d=cfg.backend_d)
        images = sample_noise(cfg.seed, cfg.n_images, cfg.channels)

    db = build_database(backend, images, categories)
    save_database(db, args.out)
    print(f"wrote database: {args.out} "
          f"(images={db.n_images}, categories={len(db.categories)}, "
          f"entries={len(db.entry_pairs)})")
    return EXIT_OK


def _cmd_inspect_db(args) -> int:
    db = load_database(args.db)
    backend = db.backend
    backend_desc = backend.get("kind", "?")
    extras = [f"{k}={backend[k]}" for k in ("d", "seed") if backend.get(k) is not None]
    if extras:
        backend_desc += " (" + ", ".join(extras) + ")"
    print(f"images: {db.n_images}")
    print(f"channels: {db.channels}")
    print(f"categories: {', '.join(db.categories)}")
    print(f"entries: {len(db.entry_pairs)}")
    print(f"backend: {backend_desc}")
    print(f"image_seed: {db.image_seed}")
    if args.category is not None:
        averages = db.average_matrix(args.category)
        flat = averages.ravel()
        order = np.argsort(-flat, kind="stable")[: args.top]
        print(f"top {len(order)} blocks for {args.category!r}:")
        for rank, ix in enumerate(order, start=1):
            image_id, grid_index = divmod(int(ix), averages.shape[1])
            print(f"  {rank}. image={image_id} block={grid_index} "
                  f"avg={flat[ix]:.6f}")
    return EXIT_OK


def _cmd_compose(args) -> int:
    cfg = parse_config(args.config, {
        "t_obj": args.t_obj,
        "t_bg": args.t_bg,
        "seed": args.seed,
    })
    db = load_database(args.db)
    layout = layout_from_dict(_read_json_file(args.layout))
    composed = compose_initial_image(db, layout, _selection_config(cfg), seed=cfg.seed)
    save_composed(composed, args.out)
    report = normality_report(composed.image, composed.provenance)
    print(f"wrote {args.out}.bin and {args.out}.json "
          f"(duplicate_blocks={report.duplicate_blocks}, "
          f"ks={report.ks_statistic:.4f})")
    return EXIT_OK


def _cmd_stats(args) -> int:
    provenance = None
    channels = None
    if args.provenance is not None:
        sidecar = _read_json_file(args.provenance)
        try:
            channels = int(sidecar["channels"])
            provenance = [
                CellProvenance(int(p["img"]), int(p["blk"]), p["role"])
                for p in sidecar["provenance"]
            ]
        except (TypeError, KeyError) as exc:
            raise DatabaseError(f"{args.provenance}: malformed sidecar ({exc})") from None

    payload = Path(args.image).read_bytes()
    plane = IMAGE_SIDE * IMAGE_SIDE * 4
    if len(payload) == 0 or len(payload) % plane != 0:
        raise DatabaseError(
            f"{args.image}: size {len(payload)} is not a whole number of "
            f"{IMAGE_SIDE}x{IMAGE_SIDE} float32 channel planes"
        )
    if channels is None:
        channels = len(payload) // plane
    elif channels * plane != len(payload):
        raise DatabaseError(
            f"{args.image}: size {len(payload)} does not match the sidecar's "
            f"{channels} channels"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(
        channels, IMAGE_SIDE, IMAGE_SIDE).copy()
    image = NoiseImage(data, image_id=0)

    report = normality_report(image, provenance)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def _parse_layout_mapping(doc) -> dict:
    if not isinstance(doc, dict):
        raise ValueError("layouts file must map sample ids to layout objects")
    return {str(sid): layout_from_dict(layout) for sid, layout in doc.items()}


def _parse_detection_mapping(doc) -> dict:
    if not isinstance(doc, dict):
        raise ValueError("detections file must map sample ids to detection lists")
    out = {}
    for sid, entries in doc.items():
        out[str(sid)] = [
            Detection(
                category=e["category"],
                bbox=tuple(e["bbox"]),
                confidence=float(e.get("confidence", 1.0)),
            )
            for e in entries
        ]
    return out


def _cmd_eval(args) -> int:
    layouts = _parse_layout_mapping(_read_json_file(args.layouts))
    detections = _parse_detection_mapping(_read_json_file(args.detections))
    report = evaluate(layouts, detections)
    print(report.to_table())
    if args.out is not None:
        Path(args.out).write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_ingest_coco(args) -> int:
    samples = ingest_coco(args.annotations, args.captions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    layouts = {s.sample_id: layout_to_dict(s.layout) for s in samples}
    captions = {s.sample_id: s.caption for s in samples}
    (out / "layouts.json").write_text(json.dumps(layouts, indent=2) + "\n", encoding="utf-8")
    (out / "captions.json").write_text(json.dumps(captions, indent=2) + "\n", encoding="utf-8")
    print(f"kept {len(samples)} samples -> {out / 'layouts.json'}, {out / 'captions.json'}")
    return EXIT_OK


def _cmd_render_heatmap(args) -> int:
    db = load_database(args.db)
    if not (0 <= args.image_id < db.n_images):
        raise ValueError(
            f"image-id {args.image_id} out of range for {db.n_images} images")
    score_map = db.average_matrix(args.category)[args.image_id].reshape(16, 16)
    render_heatmap(score_map, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    db = load_database(args.db)
    layouts_doc = _parse_layout_mapping(_read_json_file(args.layouts))
    layouts = [layouts_doc[sid] for sid in sorted(layouts_doc)]
    t_obj_values = [float(v) for v in args.t_obj.split(",") if v.strip()]
    t_bg_values = [float(v) for v in args.t_bg.split(",") if v.strip()]
    rows = run_sweep(db, layouts, t_obj_values, t_bg_values,
                     seeds=args.seeds, base_seed=args.base_seed)
    header = ("t_obj", "t_bg", "mean_duplicate_blocks", "mean_ks_statistic",
              "mean_object_candidates", "mean_background_candidates")
    print("  ".join(h.rjust(len(h)) for h in header))
    for row in rows:
        print("  ".join(
            f"{row[h]:.4f}".rjust(len(h)) for h in header))
    if args.out is not None:
        Path(args.out).write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="noise-forge",
                     description="Tailored initial noise for layout guidance.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("create-db", help="build and save a block database")
    p.add_argument("--categories", required=True, help="file with one category per line")
    p.add_argument("--out", required=True, help="output database directory")
    p.add_argument("--n", type=int, default=None, help="number of noise images")
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="noise image seed")
    p.add_argument("--backend", choices=["synthetic", "import"], default=None)
    p.add_argument("--backend-seed", type=int, default=None)
    p.add_argument("--backend-d", type=int, default=None)
    p.add_argument("--import-dir", default=None,
                   help="existing database directory to rescore from (backend=import)")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_create_db)

    p = sub.add_parser("inspect-db", help="validate and summarize a database")
    p.add_argument("db", help="database directory")
    p.add_argument("--category", default=None, help="list top blocks for a category")
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(func=_cmd_inspect_db)

    p = sub.add_parser("compose", help="compose an initial noise image for a layout")
    p.add_argument("--db", required=True)
    p.add_argument("--layout", required=True, help="layout JSON file")
    p.add_argument("--out", required=True, help="output prefix (.bin/.json)")
    p.add_argument("--t-obj", type=float, default=None)
    p.add_argument("--t-bg", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_compose)

    p = sub.add_parser("stats", help="normality report for a composed image")
    p.add_argument("image", help="image .bin file")
    p.add_argument("--provenance", default=None,
                   help="composed .json sidecar (enables duplicate counting)")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("eval", help="score detections against layout guidance")
    p.add_argument("--layouts", required=True, help="JSON mapping sample id -> layout")
    p.add_argument("--detections", required=True, help="JSON mapping sample id -> detections")
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ingest-coco", help="filter COCO annotations into layouts")
    p.add_argument("--annotations", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_ingest_coco)

    p = sub.add_parser("render-heatmap", help="render a category average-score map")
    p.add_argument("--db", required=True)
    p.add_argument("--category", required=True)
    p.add_argument("--image-id", type=int, default=0)
    p.add_argument("--out", required=True, help="output raster path (e.g. .png)")
    p.set_defaults(func=_cmd_render_heatmap)

    p = sub.add_parser("sweep", help="threshold sensitivity sweep")
    p.add_argument("--db", required=True)
    p.add_argument("--layouts", required=True, help="JSON mapping sample id -> layout")
    p.add_argument("--t-obj", default="0.3,0.5,0.7", help="comma-separated values")
    p.add_argument("--t-bg", default="0.1", help="comma-separated values")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write rows as JSON here")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DatabaseError, ScoringError, CocoFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
