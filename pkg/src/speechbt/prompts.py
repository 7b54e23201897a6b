"""Audio-prompt pool: speaker-embedding dedup and prompt sampling.

Embeddings arrive precomputed in JSONL; no encoder runs here. Dedup is a
greedy first-wins scan: a clip survives iff its cosine similarity to every
previously retained clip stays under the threshold (0.8 by default), so the
retained list is a subsequence of the input.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, InsufficientPool, ZeroNorm
from .jsonio import dumps_canonical

PROMPT_SCHEMA = "speechbt.prompt.v1"

DEFAULT_DEDUP_THRESHOLD = 0.8
DEFAULT_MIN_DURATION_S = 3.0
DEFAULT_MAX_DURATION_S = 15.0


@dataclass(frozen=True)
class SpeakerEmbedding:
    vector: tuple[float, ...]
    encoder_id: str = "unknown"

    @property
    def dimension(self) -> int:
        return len(self.vector)


@dataclass(frozen=True)
class PromptClip:
    prompt_id: str
    audio_ref: str
    duration_s: float
    source: str
    embedding: SpeakerEmbedding
    language_hint: str | None = None

    def to_dict(self, retained: bool | None = None) -> dict:
        payload = {
            "schema": PROMPT_SCHEMA,
            "prompt_id": self.prompt_id,
            "audio_ref": self.audio_ref,
            "duration_s": self.duration_s,
            "source": self.source,
            "encoder_id": self.embedding.encoder_id,
            "vector": list(self.embedding.vector),
        }
        if self.language_hint is not None:
            payload["language_hint"] = self.language_hint
        if retained is not None:
            payload["retained"] = retained
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "PromptClip":
        return cls(
            prompt_id=payload["prompt_id"],
            audio_ref=payload["audio_ref"],
            duration_s=payload["duration_s"],
            source=payload["source"],
            embedding=SpeakerEmbedding(
                vector=tuple(float(x) for x in payload["vector"]),
                encoder_id=payload.get("encoder_id", "unknown"),
            ),
            language_hint=payload.get("language_hint"),
        )


def cosine_similarity(a: SpeakerEmbedding, b: SpeakerEmbedding) -> float:
    if a.dimension != b.dimension:
        raise DimensionMismatch(f"dimensions differ: {a.dimension} vs {b.dimension}")
    va = np.asarray(a.vector, dtype=np.float64)
    vb = np.asarray(b.vector, dtype=np.float64)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroNorm("embedding with zero norm has no direction")
    return float(np.dot(va, vb) / (na * nb))


def _validate_pool(clips: Sequence[PromptClip]) -> None:
    if not clips:
        return
    dim = clips[0].embedding.dimension
    encoder = clips[0].embedding.encoder_id
    for clip in clips:
        emb = clip.embedding
        if emb.dimension != dim:
            raise DimensionMismatch(
                f"clip {clip.prompt_id!r}: dimension {emb.dimension} != pool dimension {dim}"
            )
        if emb.encoder_id != encoder:
            raise ValueError(
                f"clip {clip.prompt_id!r}: encoder {emb.encoder_id!r} != pool encoder {encoder!r}"
            )
        if not all(math.isfinite(x) for x in emb.vector):
            raise ValueError(f"clip {clip.prompt_id!r}: non-finite embedding entry")


def dedup_pool(
    clips: Sequence[PromptClip], threshold: float = DEFAULT_DEDUP_THRESHOLD
) -> list[PromptClip]:
    """Drop near-identical voices; keep the first of each similarity cluster.

    After the scan every retained pair sits strictly below ``threshold``.
    The inner similarity loop is vectorized but the semantics are exactly the
    naive one-by-one scan over the input order.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    _validate_pool(clips)
    retained: list[PromptClip] = []
    rows: list[np.ndarray] = []
    for clip in clips:
        vec = np.asarray(clip.embedding.vector, dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ZeroNorm(f"clip {clip.prompt_id!r} has a zero-norm embedding")
        unit = vec / norm
        if rows:
            sims = np.vstack(rows) @ unit
            if float(sims.max()) >= threshold:
                continue
        retained.append(clip)
        rows.append(unit)
    return retained


def sample_prompts(pool: Sequence[PromptClip], k: int, seed: int) -> list[PromptClip]:
    """Seeded uniform sample without replacement, stable for (pool order, k, seed)."""
    if k > len(pool):
        raise InsufficientPool(f"requested {k} prompts from a pool of {len(pool)}")
    return random.Random(seed).sample(list(pool), k)


def prompt_cycle(pool: Sequence[PromptClip], seed: int) -> Iterator[PromptClip]:
    """Endless round-robin over a seeded shuffle of the pool."""
    if not pool:
        raise InsufficientPool("prompt pool is empty")
    order = sample_prompts(pool, len(pool), seed)
    while True:
        yield from order


def read_prompt_pool(
    path: str | Path,
    min_duration_s: float = DEFAULT_MIN_DURATION_S,
    max_duration_s: float = DEFAULT_MAX_DURATION_S,
) -> tuple[list[PromptClip], int]:
    """Load clips from JSONL, dropping ones outside the duration bounds.

    Returns (clips, dropped_count). Duplicate prompt ids are corrupt input.
    """
    clips: list[PromptClip] = []
    seen_ids: set[str] = set()
    dropped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            clip = PromptClip.from_dict(json.loads(line))
            if clip.prompt_id in seen_ids:
                raise ValueError(f"duplicate prompt_id {clip.prompt_id!r} in {path}")
            seen_ids.add(clip.prompt_id)
            if not min_duration_s <= clip.duration_s <= max_duration_s:
                dropped += 1
                continue
            clips.append(clip)
    return clips, dropped


def write_prompt_pool(
    path: str | Path, clips: Iterable[PromptClip], retained: bool | None = None
) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for clip in clips:
            fh.write(dumps_canonical(clip.to_dict(retained=retained)))
            fh.write("\n")
            n += 1
    return n
