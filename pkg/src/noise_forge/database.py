"""The pixel-block database: directed pair scores and per-category averages.

For every unordered category pair {c1, c2} the build scores each noise image
once under the prompt "a c1 and a c2" and splits the result into the two
directed entries c1(vs c2) and c2(vs c1). Entries are min-max normalized to
[0, 1] over all N*256 blocks and then clamped, so the selection thresholds
are comparable across entries. Per-category averages follow as the mean of
an entry's directed scores over all contrast categories.

On-disk layout (one directory per database):

    manifest.json  format_version, n_images, channels, block_size, grid,
                   categories, backend descriptor, image_seed, checksums
    blocks.bin     float32 LE, [image_id][grid_index][channel][row][col]
    entries.json   ordered list of {subject, contrast}
    scores.bin     float32 LE, [entry_index][image_id][grid_index]
    averages.bin   float32 LE, [category_index][image_id][grid_index]

Loading verifies sizes, checksums, score ranges, and that stored averages
match recomputation from the entries before any database object is returned.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import BLOCK_SIDE, CELLS, NoiseImage, assemble_blocks
from .scorer import (
    ImportedBackend,
    attention_maps,
    category_score_map,
    pair_prompt_tokens,
    tokenize,
)

FORMAT_VERSION = 1

MANIFEST_FILE = "manifest.json"
BLOCKS_FILE = "blocks.bin"
ENTRIES_FILE = "entries.json"
SCORES_FILE = "scores.bin"
AVERAGES_FILE = "averages.bin"


class DatabaseError(Exception):
    """Base class for database format and consistency problems."""


class CorruptHeaderError(DatabaseError):
    """manifest.json or entries.json is unreadable or malformed."""


class VersionMismatchError(DatabaseError):
    """The directory was written with an unsupported format version."""


class TruncatedPayloadError(DatabaseError):
    """A binary payload does not have the size the manifest implies."""


class ChecksumMismatchError(DatabaseError):
    """A payload's checksum does not match the manifest."""


class InconsistentDatabaseError(DatabaseError):
    """Loaded arrays violate a database invariant (range, Eq-consistency)."""


class ScoringError(RuntimeError):
    """A backend failed while scoring; carries (image, pair) context."""


def check_categories(categories) -> list[str]:
    cats = [str(c) for c in categories]
    if not cats:
        raise ValueError("category list must have at least one entry")
    if any(not c.strip() for c in cats):
        raise ValueError("category names must be nonempty")
    if len(set(cats)) != len(cats):
        raise ValueError("category list contains duplicates")
    return cats


def directed_pairs(categories: list[str]) -> list[tuple[str, str]]:
    """All ordered (subject, contrast) pairs in category-list order."""
    return [(ci, cj) for ci in categories for cj in categories if cj != ci]


def minmax_normalize(raw: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1] and clamp; constant input maps to zeros.

    The clamp is a no-op for freshly scaled scores but guards imported raw
    scores carrying outliers.
    """
    raw = np.asarray(raw, dtype=np.float64)
    lo = raw.min()
    hi = raw.max()
    if hi > lo:
        scaled = (raw - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(raw)
    return np.clip(scaled, 0.0, 1.0).astype(np.float32)


def compute_averages(scores: np.ndarray, categories: list[str],
                     entry_pairs: list[tuple[str, str]]) -> np.ndarray:
    """Per-category mean of directed entry scores (storage dtype float32)."""
    n_images = scores.shape[1] if scores.ndim == 3 else 0
    out = np.zeros((len(categories), n_images, CELLS), dtype=np.float32)
    for i, cat in enumerate(categories):
        rows = [e for e, (subj, _) in enumerate(entry_pairs) if subj == cat]
        out[i] = scores[rows].mean(axis=0, dtype=np.float64).astype(np.float32)
    return out


@dataclass(frozen=True)
class ScoreEntry:
    """Directed scores of subject (vs. contrast), one value per block."""

    subject: str
    contrast: str
    scores: np.ndarray  # (n_images, 256) float32


@dataclass
class BlockDatabase:
    n_images: int
    channels: int
    categories: list[str]
    backend: dict
    image_seed: int | None
    blocks: np.ndarray       # (n_images, 256, C, 4, 4) float32
    entry_pairs: list[tuple[str, str]]
    scores: np.ndarray       # (n_entries, n_images, 256) float32
    averages: np.ndarray     # (n_categories, n_images, 256) float32

    @property
    def n_blocks(self) -> int:
        return self.n_images * CELLS

    def category_index(self, category: str) -> int:
        try:
            return self.categories.index(category)
        except ValueError:
            raise KeyError(f"unknown category {category!r}; database holds {self.categories}") from None

    def entry_index(self, subject: str, contrast: str) -> int:
        try:
            return self.entry_pairs.index((subject, contrast))
        except ValueError:
            raise KeyError(f"no entry for {subject!r} (vs. {contrast!r})") from None

    def entry(self, subject: str, contrast: str) -> ScoreEntry:
        return ScoreEntry(subject, contrast, self.scores[self.entry_index(subject, contrast)])

    def entry_scores(self, subject: str, contrast: str) -> np.ndarray:
        """(n_images, 256) directed scores of subject (vs. contrast)."""
        return self.scores[self.entry_index(subject, contrast)]

    def average_matrix(self, category: str) -> np.ndarray:
        """(n_images, 256) average scores of a category."""
        return self.averages[self.category_index(category)]

    def block_data(self, image_id: int, grid_index: int) -> np.ndarray:
        return self.blocks[image_id, grid_index]


def build_database(backend, images: list[NoiseImage], categories) -> BlockDatabase:
    """Score every (image, category pair) and assemble the database.

    Images are indexed by list position, which must match their image_id.
    The backend is invoked exactly n_images * n_pairs times: once per
    (image, unordered pair), or once per image for a single-category list.
    """
    categories = check_categories(categories)
    if not images:
        raise ValueError("need at least one noise image")
    channels = images[0].channels
    for pos, img in enumerate(images):
        if img.image_id != pos:
            raise ValueError(f"image at position {pos} has image_id {img.image_id}")
        if img.channels != channels:
            raise ValueError("images disagree on channel count")

    n = len(images)
    pairs = list(itertools.combinations(categories, 2))
    entry_pairs = directed_pairs(categories)
    entry_pos = {pair: e for e, pair in enumerate(entry_pairs)}

    if len(categories) == 1:
        # Single-category databases have no contrast entries; the category's
        # own tokens are scored alone, so a one-word category softmaxes to 1
        # everywhere before normalization.
        cat = categories[0]
        tokens = tokenize(cat)
        raw_avg = np.zeros((1, n, CELLS), dtype=np.float64)
        for img in images:
            maps = _score(backend, img, tokens, (cat,))
            raw_avg[0, img.image_id] = category_score_map(maps, cat).ravel()
        scores = np.zeros((0, n, CELLS), dtype=np.float32)
        averages = minmax_normalize(raw_avg).reshape(1, n, CELLS)
    else:
        raw = np.zeros((len(entry_pairs), n, CELLS), dtype=np.float64)
        for img in images:
            for c1, c2 in pairs:
                maps = _score(backend, img, pair_prompt_tokens(c1, c2), (c1, c2))
                raw[entry_pos[(c1, c2)], img.image_id] = category_score_map(maps, c1).ravel()
                raw[entry_pos[(c2, c1)], img.image_id] = category_score_map(maps, c2).ravel()
        scores = np.stack([minmax_normalize(raw[e]) for e in range(len(entry_pairs))])
        averages = compute_averages(scores, categories, entry_pairs)

    blocks = np.stack([
        img.data.reshape(channels, 16, BLOCK_SIDE, 16, BLOCK_SIDE)
                .transpose(1, 3, 0, 2, 4)
                .reshape(CELLS, channels, BLOCK_SIDE, BLOCK_SIDE)
        for img in images
    ])

    seeds = {img.source_seed for img in images}
    image_seed = seeds.pop() if len(seeds) == 1 else None

    return BlockDatabase(
        n_images=n,
        channels=channels,
        categories=categories,
        backend=backend.describe(),
        image_seed=image_seed,
        blocks=blocks.astype(np.float32),
        entry_pairs=entry_pairs,
        scores=scores,
        averages=averages,
    )


def _score(backend, image, tokens, pair):
    try:
        return attention_maps(backend, image, tokens)
    except Exception as exc:
        raise ScoringError(
            f"backend failed scoring image_id={image.image_id} pair={pair}: {exc}"
        ) from exc


def average_score(db: BlockDatabase, category: str, block: tuple[int, int]) -> float:
    """Stored average score of a block for a category (Eq-2 mean)."""
    image_id, grid_index = block
    if not (0 <= image_id < db.n_images and 0 <= grid_index < CELLS):
        raise ValueError(f"block {block} out of range for {db.n_images} images")
    return float(db.averages[db.category_index(category), image_id, grid_index])


def _le32(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _sha256(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def save_database(db: BlockDatabase, path) -> None:
    """Write the database directory; byte output is deterministic."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    payloads = {
        BLOCKS_FILE: _le32(db.blocks),
        SCORES_FILE: _le32(db.scores),
        AVERAGES_FILE: _le32(db.averages),
    }
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_images": db.n_images,
        "channels": db.channels,
        "block_size": BLOCK_SIDE,
        "grid": 16,
        "categories": db.categories,
        "backend": db.backend,
        "image_seed": db.image_seed,
        "checksums": {name: _sha256(data) for name, data in payloads.items()},
    }
    for name, data in payloads.items():
        (root / name).write_bytes(data)
    (root / ENTRIES_FILE).write_text(
        json.dumps([{"subject": s, "contrast": c} for s, c in db.entry_pairs], indent=2) + "\n",
        encoding="utf-8",
    )
    (root / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CorruptHeaderError(f"missing {path.name} in {path.parent}") from None
    except json.JSONDecodeError as exc:
        raise CorruptHeaderError(f"{path}: malformed JSON ({exc})") from None


def _read_payload(root: Path, name: str, expected_bytes: int, checksums: dict | None) -> bytes:
    path = root / name
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise TruncatedPayloadError(f"missing payload {name}") from None
    if len(data) != expected_bytes:
        raise TruncatedPayloadError(
            f"{name}: expected {expected_bytes} bytes, found {len(data)}"
        )
    if checksums is not None:
        recorded = checksums.get(name)
        if recorded is not None and _sha256(data) != recorded:
            raise ChecksumMismatchError(f"{name}: checksum mismatch")
    return data


def load_database(path) -> BlockDatabase:
    """Load and fully validate a database directory.

    Raises CorruptHeaderError, VersionMismatchError, TruncatedPayloadError,
    ChecksumMismatchError, or InconsistentDatabaseError; never returns a
    partially validated database.
    """
    root = Path(path)
    manifest = _read_json(root / MANIFEST_FILE)
    if not isinstance(manifest, dict):
        raise CorruptHeaderError(f"{root / MANIFEST_FILE}: manifest is not an object")

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format_version {version!r}, expected {FORMAT_VERSION}")

    required = ("n_images", "channels", "block_size", "grid", "categories", "backend")
    missing = [k for k in required if k not in manifest]
    if missing:
        raise CorruptHeaderError(f"manifest missing keys: {missing}")
    if manifest["block_size"] != BLOCK_SIDE or manifest["grid"] != 16:
        raise CorruptHeaderError(
            f"unsupported geometry block_size={manifest['block_size']} grid={manifest['grid']}"
        )

    try:
        categories = check_categories(manifest["categories"])
        n = int(manifest["n_images"])
        channels = int(manifest["channels"])
    except (TypeError, ValueError) as exc:
        raise CorruptHeaderError(f"manifest field invalid: {exc}") from None
    if n < 1 or channels < 1:
        raise CorruptHeaderError(f"manifest n_images={n} channels={channels} out of range")

    entries_doc = _read_json(root / ENTRIES_FILE)
    expected_pairs = directed_pairs(categories)
    try:
        entry_pairs = [(e["subject"], e["contrast"]) for e in entries_doc]
    except (TypeError, KeyError) as exc:
        raise CorruptHeaderError(f"entries.json malformed: {exc}") from None
    if sorted(entry_pairs) != sorted(expected_pairs):
        raise CorruptHeaderError("entries.json does not enumerate all directed category pairs")

    checksums = manifest.get("checksums")
    n_entries = len(entry_pairs)
    blocks_raw = _read_payload(root, BLOCKS_FILE, n * CELLS * channels * 16 * 4, checksums)
    scores_raw = _read_payload(root, SCORES_FILE, n_entries * n * CELLS * 4, checksums)
    averages_raw = _read_payload(root, AVERAGES_FILE, len(categories) * n * CELLS * 4, checksums)

    blocks = np.frombuffer(blocks_raw, dtype="<f4").reshape(n, CELLS, channels, 4, 4).copy()
    scores = np.frombuffer(scores_raw, dtype="<f4").reshape(n_entries, n, CELLS).copy()
    averages = np.frombuffer(averages_raw, dtype="<f4").reshape(len(categories), n, CELLS).copy()

    if not np.all(np.isfinite(blocks)):
        raise InconsistentDatabaseError("blocks contain non-finite values")
    for name, arr in ((SCORES_FILE, scores), (AVERAGES_FILE, averages)):
        if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1):
            raise InconsistentDatabaseError(f"{name}: scores must be finite and within [0, 1]")
    if n_entries:
        recomputed = compute_averages(scores, categories, entry_pairs)
        if not np.array_equal(recomputed, averages):
            raise InconsistentDatabaseError("stored averages do not match entry recomputation")

    return BlockDatabase(
        n_images=n,
        channels=channels,
        categories=categories,
        backend=dict(manifest["backend"]),
        image_seed=manifest.get("image_seed"),
        blocks=blocks,
        entry_pairs=entry_pairs,
        scores=scores,
        averages=averages,
    )


def images_from_database(db: BlockDatabase) -> list[NoiseImage]:
    """Reassemble the database's source noise images from stored blocks."""
    return [
        NoiseImage(assemble_blocks(list(db.blocks[i])), image_id=i, source_seed=db.image_seed)
        for i in range(db.n_images)
    ]


def database_backend(db: BlockDatabase) -> ImportedBackend:
    """Imported scorer backed by a database's stored pair scores.

    Stored entries are min-max normalized, so the softmax structure of the
    original maps is gone; the reconstruction gives each category's tokens
    the per-cell share of its entry score relative to the pair total (even
    split at cells where both entries are zero), with filler words at zero.
    Per-cell sums over tokens are exactly one.
    """
    store: dict[tuple[int, tuple[str, ...]], np.ndarray] = {}
    if len(db.categories) == 1:
        cat_tokens = tokenize(db.categories[0])
        maps = np.full((len(cat_tokens), 16, 16), 1.0 / len(cat_tokens))
        for img in range(db.n_images):
            store[(img, tuple(cat_tokens))] = maps
    else:
        for c1, c2 in itertools.combinations(db.categories, 2):
            tokens = pair_prompt_tokens(c1, c2)
            t1, t2 = tokenize(c1), tokenize(c2)
            s1 = db.entry_scores(c1, c2).astype(np.float64)
            s2 = db.entry_scores(c2, c1).astype(np.float64)
            total = s1 + s2
            w1 = np.where(total > 0, s1 / np.where(total > 0, total, 1.0), 0.5)
            w2 = 1.0 - w1
            for img in range(db.n_images):
                maps = np.zeros((len(tokens), 16, 16))
                share1 = (w1[img] / len(t1)).reshape(16, 16)
                share2 = (w2[img] / len(t2)).reshape(16, 16)
                for pos, tok in enumerate(tokens):
                    if tok in t1:
                        maps[pos] = share1
                    elif tok in t2:
                        maps[pos] = share2
                store[(img, tuple(tokens))] = maps
    d = int(db.backend.get("d", 0) or 0)
    return ImportedBackend(d=d, store=store)
