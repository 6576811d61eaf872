import itertools
import json

import numpy as np
import pytest

from noise_forge.database import (
    ChecksumMismatchError,
    CorruptHeaderError,
    InconsistentDatabaseError,
    ScoringError,
    TruncatedPayloadError,
    VersionMismatchError,
    average_score,
    build_database,
    compute_averages,
    database_backend,
    directed_pairs,
    images_from_database,
    load_database,
    minmax_normalize,
    save_database,
)
from noise_forge.grid import CELLS, extract_blocks, sample_noise
from noise_forge.scorer import (
    SyntheticBackend,
    attention_maps,
    category_score_map,
    pair_prompt_tokens,
)


class CountingBackend:
    """Wraps a backend and counts compute_maps invocations."""

    def __init__(self, inner):
        self.inner = inner
        self.kind = inner.kind
        self.d = inner.d
        self.seed = inner.seed
        self.calls = 0

    def describe(self):
        return self.inner.describe()

    def compute_maps(self, image, tokens):
        self.calls += 1
        return self.inner.compute_maps(image, tokens)


class FailingBackend:
    kind = "synthetic"
    d = 8
    seed = 0

    def describe(self):
        return {"kind": self.kind, "d": self.d, "seed": self.seed}

    def compute_maps(self, image, tokens):
        raise RuntimeError("boom")


def small_db(n=2, categories=("dog", "cat", "car"), seed=7, image_seed=3):
    images = sample_noise(image_seed, n)
    return build_database(SyntheticBackend(seed=seed), images, list(categories))


def test_directed_pairs_order():
    assert directed_pairs(["a", "b", "c"]) == [
        ("a", "b"), ("a", "c"), ("b", "a"), ("b", "c"), ("c", "a"), ("c", "b"),
    ]


def test_combinatorics_ten_images_five_categories():
    cats = ["dog", "cat", "car", "boat", "tree"]
    images = sample_noise(0, 10)
    backend = CountingBackend(SyntheticBackend(seed=1))
    db = build_database(backend, images, cats)
    assert len(db.entry_pairs) == 20
    assert db.scores.shape == (20, 10, CELLS)
    assert db.averages.shape == (5, 10, CELLS)
    for subject, contrast in db.entry_pairs:
        assert db.entry_scores(subject, contrast).size == 2560
    # one scorer call per (image, unordered pair)
    assert backend.calls == 10 * 10


def test_minmax_normalization_attains_bounds():
    db = small_db()
    for e in range(db.scores.shape[0]):
        entry = db.scores[e]
        assert entry.min() == 0.0
        assert entry.max() == 1.0
        assert entry.dtype == np.float32


def test_minmax_normalize_constant_input_is_zeros():
    out = minmax_normalize(np.full((4, 16), 3.5))
    assert out.dtype == np.float32
    assert not out.any()


def test_minmax_normalize_clamps():
    out = minmax_normalize(np.array([0.0, 1.0, 2.0]))
    assert out.tolist() == [0.0, 0.5, 1.0]


def test_build_matches_brute_force_oracle():
    # recompute scoring + normalization independently for N=2, 3 categories
    cats = ["dog", "cat", "car"]
    images = sample_noise(3, 2)
    db = build_database(SyntheticBackend(seed=7), images, cats)

    oracle_backend = SyntheticBackend(seed=7)
    raw = {pair: np.zeros((2, CELLS)) for pair in directed_pairs(cats)}
    for img in images:
        for c1, c2 in itertools.combinations(cats, 2):
            maps = attention_maps(oracle_backend, img, pair_prompt_tokens(c1, c2))
            raw[(c1, c2)][img.image_id] = category_score_map(maps, c1).ravel()
            raw[(c2, c1)][img.image_id] = category_score_map(maps, c2).ravel()
    for pair, scores in raw.items():
        assert np.array_equal(db.entry_scores(*pair), minmax_normalize(scores))
    for i, cat in enumerate(cats):
        rows = [raw[(cat, other)] for other in cats if other != cat]
        want = np.mean([minmax_normalize(r) for r in rows], axis=0, dtype=np.float64)
        assert np.allclose(db.averages[i], want.astype(np.float32), atol=0)


def test_build_determinism():
    a = small_db()
    b = small_db()
    assert np.array_equal(a.scores, b.scores)
    assert np.array_equal(a.blocks, b.blocks)
    assert np.array_equal(a.averages, b.averages)


def test_blocks_match_extracted_blocks():
    db = small_db()
    images = sample_noise(3, 2)
    for img in images:
        for block in extract_blocks(img):
            assert np.array_equal(db.block_data(img.image_id, block.grid_index), block.data)


def test_average_score_hand_example():
    db = small_db(n=2, categories=("dog", "cat", "car", "boat"))
    rng = np.random.default_rng(0)
    for _ in range(50):
        image_id = int(rng.integers(0, 2))
        grid_index = int(rng.integers(0, CELLS))
        got = average_score(db, "dog", (image_id, grid_index))
        entries = [db.entry_scores("dog", c)[image_id, grid_index] for c in ("cat", "car", "boat")]
        want = np.float32(np.mean([np.float64(v) for v in entries]))
        assert got == pytest.approx(float(want), abs=1e-9)


def test_average_score_constant_entries():
    db = small_db()
    # all entries equal v at a block -> average is v
    i = db.entry_index("dog", "cat")
    j = db.entry_index("dog", "car")
    db.scores[i, 0, 5] = 0.25
    db.scores[j, 0, 5] = 0.25
    db.averages[:] = compute_averages(db.scores, db.categories, db.entry_pairs)
    assert average_score(db, "dog", (0, 5)) == pytest.approx(0.25)


def test_average_score_rejects_unknown_category():
    db = small_db()
    with pytest.raises(KeyError):
        average_score(db, "zebra", (0, 0))
    with pytest.raises(ValueError):
        average_score(db, "dog", (9, 0))


def test_single_category_database():
    images = sample_noise(0, 1)
    backend = CountingBackend(SyntheticBackend(seed=1))
    db = build_database(backend, images, ["dog"])
    assert db.entry_pairs == []
    assert db.scores.shape == (0, 1, CELLS)
    assert db.averages.shape == (1, 1, CELLS)
    # the category scores alone: softmax of one token is 1.0 everywhere,
    # and the constant entry normalizes to zero
    assert backend.calls == 1
    maps = attention_maps(SyntheticBackend(seed=1), images[0], ["dog"])
    assert np.array_equal(maps.maps, np.ones((1, 16, 16)))
    assert not db.averages.any()


def test_build_rejects_bad_inputs():
    images = sample_noise(0, 2)
    backend = SyntheticBackend()
    with pytest.raises(ValueError):
        build_database(backend, [], ["dog"])
    with pytest.raises(ValueError):
        build_database(backend, images, [])
    with pytest.raises(ValueError):
        build_database(backend, images, ["dog", "dog"])
    with pytest.raises(ValueError):
        build_database(backend, [images[1], images[0]], ["dog", "cat"])


def test_backend_failure_carries_context():
    images = sample_noise(0, 1)
    with pytest.raises(ScoringError, match=r"image_id=0.*dog.*cat"):
        build_database(FailingBackend(), images, ["dog", "cat"])


def test_round_trip_bit_identity(tmp_path):
    db = small_db()
    save_database(db, tmp_path / "db")
    loaded = load_database(tmp_path / "db")
    assert loaded.n_images == db.n_images
    assert loaded.channels == db.channels
    assert loaded.categories == db.categories
    assert loaded.backend == db.backend
    assert loaded.image_seed == db.image_seed
    assert loaded.entry_pairs == db.entry_pairs
    assert np.array_equal(loaded.blocks, db.blocks)
    assert np.array_equal(loaded.scores, db.scores)
    assert np.array_equal(loaded.averages, db.averages)


def test_save_is_byte_deterministic(tmp_path):
    db = small_db()
    save_database(db, tmp_path / "a")
    save_database(db, tmp_path / "b")
    for name in ("manifest.json", "blocks.bin", "entries.json", "scores.bin", "averages.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_version_mismatch_rejected(tmp_path):
    db = small_db()
    save_database(db, tmp_path / "db")
    manifest = json.loads((tmp_path / "db" / "manifest.json").read_text())
    manifest["format_version"] = 99
    (tmp_path / "db" / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(VersionMismatchError):
        load_database(tmp_path / "db")


def test_truncated_payload_rejected(tmp_path):
    db = small_db()
    save_database(db, tmp_path / "db")
    payload = (tmp_path / "db" / "blocks.bin").read_bytes()
    (tmp_path / "db" / "blocks.bin").write_bytes(payload[:-1])
    with pytest.raises(TruncatedPayloadError):
        load_database(tmp_path / "db")


def test_checksum_mismatch_rejected(tmp_path):
    db = small_db()
    save_database(db, tmp_path / "db")
    payload = bytearray((tmp_path / "db" / "scores.bin").read_bytes())
    payload[0] ^= 0xFF
    (tmp_path / "db" / "scores.bin").write_bytes(bytes(payload))
    with pytest.raises(ChecksumMismatchError):
        load_database(tmp_path / "db")


def test_corrupt_manifest_rejected(tmp_path):
    db = small_db()
    save_database(db, tmp_path / "db")
    (tmp_path / "db" / "manifest.json").write_text("{not json")
    with pytest.raises(CorruptHeaderError):
        load_database(tmp_path / "db")


def test_missing_manifest_key_rejected(tmp_path):
    db = small_db()
    save_database(db, tmp_path / "db")
    manifest = json.loads((tmp_path / "db" / "manifest.json").read_text())
    del manifest["categories"]
    (tmp_path / "db" / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(CorruptHeaderError):
        load_database(tmp_path / "db")


def test_inconsistent_averages_rejected(tmp_path):
    import hashlib

    db = small_db()
    save_database(db, tmp_path / "db")
    averages = np.frombuffer(
        (tmp_path / "db" / "averages.bin").read_bytes(), dtype="<f4").copy()
    averages[0] = min(1.0, float(averages[0]) + 0.25)
    payload = averages.tobytes()
    (tmp_path / "db" / "averages.bin").write_bytes(payload)
    manifest = json.loads((tmp_path / "db" / "manifest.json").read_text())
    manifest["checksums"]["averages.bin"] = hashlib.sha256(payload).hexdigest()
    (tmp_path / "db" / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(InconsistentDatabaseError):
        load_database(tmp_path / "db")


def test_entries_must_enumerate_directed_pairs(tmp_path):
    db = small_db()
    save_database(db, tmp_path / "db")
    entries = json.loads((tmp_path / "db" / "entries.json").read_text())
    (tmp_path / "db" / "entries.json").write_text(json.dumps(entries[:-1]))
    with pytest.raises(CorruptHeaderError):
        load_database(tmp_path / "db")


def test_images_from_database_round_trip():
    db = small_db()
    rebuilt = images_from_database(db)
    original = sample_noise(3, 2)
    for img, out in zip(original, rebuilt):
        assert np.array_equal(img.data, out.data)
        assert out.image_id == img.image_id
        assert out.source_seed == 3


def test_database_backend_store_is_consistent():
    db = small_db()
    backend = database_backend(db)
    images = images_from_database(db)
    for img in images:
        for c1, c2 in itertools.combinations(db.categories, 2):
            maps = attention_maps(backend, img, pair_prompt_tokens(c1, c2))
            share1 = category_score_map(maps, c1)
            share2 = category_score_map(maps, c2)
            s1 = db.entry_scores(c1, c2)[img.image_id].reshape(16, 16).astype(np.float64)
            s2 = db.entry_scores(c2, c1)[img.image_id].reshape(16, 16).astype(np.float64)
            total = s1 + s2
            ok = total > 0
            # shares are proportional to the stored directed entries
            assert np.allclose((share1 + share2)[ok], total[ok] / np.where(ok, total, 1)[ok] * 1.0)
            assert np.allclose(share1[ok] / (share1 + share2)[ok], (s1 / np.where(ok, total, 1.0))[ok])


def test_database_backend_rebuild_loads(tmp_path):
    # a database rebuilt through its own imported backend is a valid database
    src = small_db()
    backend = database_backend(src)
    rebuilt = build_database(backend, images_from_database(src), src.categories)
    assert rebuilt.backend["kind"] == "imported"
    save_database(rebuilt, tmp_path / "db")
    loaded = load_database(tmp_path / "db")
    assert np.array_equal(loaded.scores, rebuilt.scores)
