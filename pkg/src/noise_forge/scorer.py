"""Cross-attention scoring of pixel blocks against prompt tokens.

Each grid cell's flattened block acts as a query; each prompt token acts as
a key. Scaled dot-product logits are softmaxed across the tokens, so for
every cell the per-token map values sum to one. The synthetic backend
derives all embeddings and projection weights from a seed, which lets the
whole pipeline run and be tested without a pretrained model; the imported
backend replays maps reconstructed from an exported score database.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .grid import GRID_SIDE, NoiseImage, flatten_cells

DEFAULT_EMBED_DIM = 64

_TAG_QUERY = 1
_TAG_KEY = 2
_TAG_TOKEN = 3


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace tokens of a prompt or category string."""
    return text.lower().split()


@dataclass(frozen=True)
class TokenEmbedding:
    token: str
    vector: np.ndarray


@dataclass(frozen=True)
class AttentionMapSet:
    """Per-token 16 x 16 attention maps for one (image, prompt) pair."""

    tokens: tuple[str, ...]
    maps: np.ndarray  # (n_tokens, 16, 16) float64

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.float64)
        if maps.shape != (len(self.tokens), GRID_SIDE, GRID_SIDE):
            raise ValueError(f"maps shape {maps.shape} does not match {len(self.tokens)} tokens")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "maps", maps)

    def validate(self) -> None:
        if np.any(self.maps < 0) or np.any(self.maps > 1):
            raise ValueError("attention values must lie in [0, 1]")
        sums = self.maps.sum(axis=0)
        if not np.allclose(sums, 1.0, atol=1e-6, rtol=0):
            worst = float(np.abs(sums - 1.0).max())
            raise ValueError(f"per-cell token sums deviate from 1 by {worst:.3e}")

    def map_for(self, token: str) -> np.ndarray:
        """Mean map over all prompt positions carrying `token`."""
        hits = [i for i, t in enumerate(self.tokens) if t == token]
        if not hits:
            raise KeyError(f"token {token!r} not among prompt tokens {list(self.tokens)}")
        return self.maps[hits].mean(axis=0)


def _hash64(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def _rng(seed: int, *entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *entropy]))


class SyntheticBackend:
    """Deterministic stand-in scorer with seed-derived weights.

    Query weights project a flattened C*4*4 block to d dims, key weights
    project token embeddings; both depend only on (seed, dims), so maps are
    reproducible bit for bit.
    """

    kind = "synthetic"

    def __init__(self, seed: int = 0, d: int = DEFAULT_EMBED_DIM):
        if d < 1:
            raise ValueError("embedding dimension must be >= 1")
        self.seed = int(seed)
        self.d = int(d)
        self._w_key = _rng(self.seed, _TAG_KEY).standard_normal((self.d, self.d)) / math.sqrt(self.d)
        self._w_query: dict[int, np.ndarray] = {}
        self._embeddings: dict[str, TokenEmbedding] = {}

    def describe(self) -> dict:
        return {"kind": self.kind, "d": self.d, "seed": self.seed}

    def token_embedding(self, token: str) -> TokenEmbedding:
        emb = self._embeddings.get(token)
        if emb is None:
            vec = _rng(self.seed, _TAG_TOKEN, _hash64(token)).standard_normal(self.d)
            vec.setflags(write=False)
            emb = TokenEmbedding(token, vec)
            self._embeddings[token] = emb
        return emb

    def _query_weights(self, channels: int) -> np.ndarray:
        w = self._w_query.get(channels)
        if w is None:
            q_dim = channels * 16
            w = _rng(self.seed, _TAG_QUERY, channels).standard_normal((self.d, q_dim)) / math.sqrt(q_dim)
            self._w_query[channels] = w
        return w

    def compute_maps(self, image: NoiseImage, tokens: list[str]) -> np.ndarray:
        w_q = self._query_weights(image.channels)
        queries = flatten_cells(image.data).astype(np.float64) @ w_q.T        # (256, d)
        keys = np.stack([self.token_embedding(t).vector for t in tokens])     # (T, d)
        keys = keys @ self._w_key.T
        logits = queries @ keys.T / math.sqrt(self.d)                         # (256, T)
        shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
        # denominator summed in value order so token permutations yield
        # bit-identical maps
        denom = np.sort(shifted, axis=1).sum(axis=1, keepdims=True)
        probs = shifted / denom
        return probs.T.reshape(len(tokens), GRID_SIDE, GRID_SIDE)


class ImportedBackend:
    """Replays externally extracted maps from a fixed read-only store.

    The store maps (image_id, prompt-token tuple) to a (n_tokens, 16, 16)
    array. Build one from an exported database directory with
    `noise_forge.database.database_backend`.
    """

    kind = "imported"

    def __init__(self, d: int, store: dict[tuple[int, tuple[str, ...]], np.ndarray]):
        self.d = int(d)
        self.seed = None
        self._store = dict(store)

    def describe(self) -> dict:
        return {"kind": self.kind, "d": self.d}

    def compute_maps(self, image: NoiseImage, tokens: list[str]) -> np.ndarray:
        key = (image.image_id, tuple(tokens))
        maps = self._store.get(key)
        if maps is None:
            raise KeyError(
                f"no imported maps for image_id={image.image_id} tokens={list(tokens)}"
            )
        return np.asarray(maps, dtype=np.float64)


def attention_maps(backend, image: NoiseImage, tokens) -> AttentionMapSet:
    """Score one image against a token list under the given backend."""
    tokens = list(tokens)
    if not tokens:
        raise ValueError("token list must be nonempty")
    result = AttentionMapSet(tuple(tokens), backend.compute_maps(image, tokens))
    result.validate()
    return result


def category_score_map(maps: AttentionMapSet, category: str) -> np.ndarray:
    """Per-cell mean map over the category's tokens (16 x 16).

    Multi-word categories average their token maps; a category token missing
    from the prompt raises an error naming it.
    """
    cat_tokens = tokenize(category)
    if not cat_tokens:
        raise ValueError(f"category {category!r} has no tokens")
    parts = []
    for tok in cat_tokens:
        try:
            parts.append(maps.map_for(tok))
        except KeyError:
            raise KeyError(
                f"category token {tok!r} (of category {category!r}) not in prompt tokens"
            ) from None
    return np.mean(parts, axis=0)


def pair_prompt_tokens(c1: str, c2: str) -> list[str]:
    """Token sequence of the pair prompt "a {c1} and a {c2}"."""
    return tokenize(f"a {c1} and a {c2}")
