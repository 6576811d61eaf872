"""noise-forge: tailored initial noise images for layout-guided synthesis.

The pipeline scores Gaussian-noise pixel blocks by semantic tendency under
category-pair prompts, stores the scores in a queryable database, selects
blocks above/below thresholds per layout region, and assembles new initial
noise images with full provenance, plus diagnostics and a layout-control
evaluation harness.
"""

from .compose import (
    BACKGROUND_ROLE,
    CellProvenance,
    ComposedImage,
    LayoutGuidance,
    LayoutObject,
    compose_initial_image,
    grid_areas,
    layout_from_dict,
    layout_to_dict,
    load_composed,
    paint_order,
    save_composed,
)
from .config import ConfigError, PipelineConfig, parse_config
from .database import (
    BlockDatabase,
    ChecksumMismatchError,
    CorruptHeaderError,
    DatabaseError,
    InconsistentDatabaseError,
    ScoreEntry,
    ScoringError,
    TruncatedPayloadError,
    VersionMismatchError,
    average_score,
    build_database,
    check_categories,
    database_backend,
    directed_pairs,
    images_from_database,
    load_database,
    minmax_normalize,
    save_database,
)
from .diagnostics import NormalityReport, ks_statistic, normality_report, render_heatmap
from .estimator import InitialNoiseComposer
from .grid import (
    BLOCK_SIDE,
    CELLS,
    DEFAULT_CANVAS,
    DEFAULT_CHANNELS,
    GRID_SIDE,
    IMAGE_SIDE,
    GridRegion,
    NoiseImage,
    PixelBlock,
    assemble_blocks,
    box_to_grid,
    check_bbox,
    extract_blocks,
    flatten_cells,
    sample_noise,
)
from .layout_eval import (
    CocoFormatError,
    CocoSample,
    Detection,
    EvalReport,
    coco_to_layouts,
    evaluate,
    ingest_coco,
    iou,
    match_sample,
    size_bucket,
)
from .scorer import (
    AttentionMapSet,
    ImportedBackend,
    SyntheticBackend,
    TokenEmbedding,
    attention_maps,
    category_score_map,
    pair_prompt_tokens,
    tokenize,
)
from .selection import (
    CandidateSet,
    SelectionConfig,
    select_background_blocks,
    select_object_blocks,
)
from .sweep import run_sweep

__version__ = "0.1.0"

__all__ = [
    "AttentionMapSet",
    "BACKGROUND_ROLE",
    "BLOCK_SIDE",
    "BlockDatabase",
    "CELLS",
    "CandidateSet",
    "CellProvenance",
    "ChecksumMismatchError",
    "CocoFormatError",
    "CocoSample",
    "ComposedImage",
    "ConfigError",
    "CorruptHeaderError",
    "DEFAULT_CANVAS",
    "DEFAULT_CHANNELS",
    "DatabaseError",
    "Detection",
    "EvalReport",
    "GRID_SIDE",
    "GridRegion",
    "IMAGE_SIDE",
    "ImportedBackend",
    "InconsistentDatabaseError",
    "InitialNoiseComposer",
    "LayoutGuidance",
    "LayoutObject",
    "NoiseImage",
    "NormalityReport",
    "PipelineConfig",
    "PixelBlock",
    "ScoreEntry",
    "ScoringError",
    "SelectionConfig",
    "SyntheticBackend",
    "TokenEmbedding",
    "TruncatedPayloadError",
    "VersionMismatchError",
    "assemble_blocks",
    "attention_maps",
    "average_score",
    "box_to_grid",
    "build_database",
    "category_score_map",
    "check_bbox",
    "check_categories",
    "coco_to_layouts",
    "compose_initial_image",
    "database_backend",
    "directed_pairs",
    "evaluate",
    "extract_blocks",
    "flatten_cells",
    "grid_areas",
    "images_from_database",
    "ingest_coco",
    "iou",
    "ks_statistic",
    "layout_from_dict",
    "layout_to_dict",
    "load_composed",
    "load_database",
    "match_sample",
    "minmax_normalize",
    "normality_report",
    "paint_order",
    "pair_prompt_tokens",
    "parse_config",
    "render_heatmap",
    "run_sweep",
    "sample_noise",
    "save_composed",
    "save_database",
    "select_background_blocks",
    "select_object_blocks",
    "size_bucket",
    "tokenize",
    "__version__",
]
