"""Synthesis planning: per-language budgets, shared-prompt batches, attention
masks, and 30-second segment packing.

Batching groups sentences of similar length under one audio prompt so a
backend can synthesize them in a single forward pass; the mask layout lets
every utterance attend to the shared prompt and causally to itself only.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

from .errors import ClipTooLong, EmptyLanguageList, ZeroWeightSum
from .jsonio import read_json
from .prompts import PromptClip

PLAN_SCHEMA = "speechbt.plan.v1"
BATCH_SCHEMA = "speechbt.batch.v1"

DEFAULT_MAX_BATCH = 16
DEFAULT_MAX_SPREAD = 20
DEFAULT_PACK_BUDGET_S = 30.0
# Audio-token rate used only to size the prompt span of the mask layout.
DEFAULT_PROMPT_TOKENS_PER_S = 25.0

# Availability tiers on the reference hours figure.
HIGH_RESOURCE_HOURS = 10_000.0
LOW_RESOURCE_HOURS = 1_000.0


def resource_tier(reference_hours: float) -> str:
    if reference_hours >= HIGH_RESOURCE_HOURS:
        return "high"
    if reference_hours > LOW_RESOURCE_HOURS:
        return "mid"
    return "low"


@dataclass(frozen=True)
class LanguagePlan:
    language: str
    real_hours: float
    target_synth_hours: float
    resource_tier: str

    def to_dict(self) -> dict:
        return {
            "language": self.language,
            "real_hours": self.real_hours,
            "target_synth_hours": self.target_synth_hours,
            "resource_tier": self.resource_tier,
        }


def plan_budgets(
    languages: Sequence[tuple[str, float, float]],
    total_synth_hours: float,
    policy: str = "uniform",
    reference_hours: dict[str, float] | None = None,
) -> list[LanguagePlan]:
    """Split a synthesis budget over languages.

    ``languages`` rows are (code, real_hours, weight). The uniform policy
    splits equally; the weighted policy splits proportionally to weight.
    Tiers come from ``reference_hours`` when given (the availability figure
    may differ from the hours actually staged), else from real_hours.
    """
    if not languages:
        raise EmptyLanguageList("budget planning needs at least one language")
    if total_synth_hours <= 0:
        raise ValueError("total_synth_hours must be positive")
    if policy not in ("uniform", "weighted"):
        raise ValueError(f"unknown policy {policy!r}")

    if policy == "uniform":
        weights = [1.0] * len(languages)
    else:
        weights = [w for _, _, w in languages]
        if any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
    weight_sum = sum(weights)
    if weight_sum <= 0:
        raise ZeroWeightSum("weighted policy needs a positive weight sum")

    plans = []
    for (code, real_hours, _), weight in zip(languages, weights):
        ref = reference_hours.get(code, real_hours) if reference_hours else real_hours
        plans.append(
            LanguagePlan(
                language=code,
                real_hours=real_hours,
                # multiply first so integer-exact splits stay exact
                target_synth_hours=(total_synth_hours * weight) / weight_sum,
                resource_tier=resource_tier(ref),
            )
        )
    return plans


@dataclass(frozen=True)
class MaskLayout:
    """Attention-permission layout for one shared-prompt batch.

    Keys in the prompt span are visible to every query; within an item each
    query sees only itself and earlier positions of the same item. Queries
    never reach into another item.
    """

    prompt_len: int
    item_lens: tuple[int, ...]

    @property
    def item_spans(self) -> tuple[tuple[int, int], ...]:
        spans = []
        offset = self.prompt_len
        for length in self.item_lens:
            spans.append((offset, length))
            offset += length
        return tuple(spans)

    @property
    def total_len(self) -> int:
        return self.prompt_len + sum(self.item_lens)

    def allow(self, q: int, k: int) -> bool:
        if not (0 <= q < self.total_len and 0 <= k < self.total_len):
            raise IndexError(f"position out of range: q={q}, k={k}")
        if k < self.prompt_len:
            return True
        for offset, length in self.item_spans:
            if offset <= q < offset + length:
                return offset <= k <= q
        return False  # q is a prompt position and k is not in the prompt

    def to_matrix(self) -> list[list[bool]]:
        n = self.total_len
        return [[self.allow(q, k) for k in range(n)] for q in range(n)]


def build_mask(prompt_len: int, item_lens: Sequence[int]) -> MaskLayout:
    if prompt_len < 0:
        raise ValueError("prompt_len cannot be negative")
    if any(n < 1 for n in item_lens):
        raise ValueError("item lengths must be >= 1")
    return MaskLayout(prompt_len=prompt_len, item_lens=tuple(item_lens))


@dataclass(frozen=True)
class BatchItem:
    sentence_id: int
    text: str
    token_estimate: int


@dataclass(frozen=True)
class SynthesisBatch:
    batch_id: str
    prompt: PromptClip
    items: tuple[BatchItem, ...]
    mask_layout: MaskLayout
    seed: int

    def to_dict(self) -> dict:
        return {
            "schema": BATCH_SCHEMA,
            "batch_id": self.batch_id,
            "prompt_id": self.prompt.prompt_id,
            "prompt_ref": self.prompt.audio_ref,
            "items": [
                {"id": it.sentence_id, "text": it.text, "token_estimate": it.token_estimate}
                for it in self.items
            ],
            "prompt_len": self.mask_layout.prompt_len,
            "item_lens": list(self.mask_layout.item_lens),
            "seed": self.seed,
        }


def token_estimate(text: str) -> int:
    # Character count is a language-agnostic relative-length proxy; the
    # engine does its own real tokenization.
    return len(text)


def derive_seed(master_seed: int, *parts: object) -> int:
    material = ":".join([str(master_seed), *map(str, parts)]).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(material, digest_size=8).digest(), "big")


def make_batches(
    sentences: Sequence[tuple[int, str]],
    max_batch: int = DEFAULT_MAX_BATCH,
    max_spread: int = DEFAULT_MAX_SPREAD,
    prompts: Iterator[PromptClip] | None = None,
    seed: int = 0,
    prompt_tokens_per_s: float = DEFAULT_PROMPT_TOKENS_PER_S,
) -> list[SynthesisBatch]:
    """Partition sentences into shared-prompt batches of similar length.

    Sort by token estimate, fill greedily while the batch stays within
    ``max_batch`` items and a ``max_spread`` token range, then order batches
    by their smallest sentence id. Prompts rotate round-robin off the sampler
    so consecutive batches carry different voices. Every sentence lands in
    exactly one batch.
    """
    if max_batch < 1:
        raise ValueError("max_batch must be >= 1")
    if max_spread < 0:
        raise ValueError("max_spread cannot be negative")
    if prompts is None:
        raise ValueError("a prompt sampler is required")

    items = sorted(
        (BatchItem(sid, text, token_estimate(text)) for sid, text in sentences),
        key=lambda it: (it.token_estimate, it.sentence_id),
    )
    groups: list[list[BatchItem]] = []
    current: list[BatchItem] = []
    for item in items:
        if current and (
            len(current) >= max_batch
            or item.token_estimate - current[0].token_estimate > max_spread
        ):
            groups.append(current)
            current = []
        current.append(item)
    if current:
        groups.append(current)

    groups.sort(key=lambda group: min(it.sentence_id for it in group))
    batches = []
    for index, group in enumerate(groups):
        prompt = next(prompts)
        prompt_len = max(1, round(prompt.duration_s * prompt_tokens_per_s))
        batches.append(
            SynthesisBatch(
                batch_id=f"batch-{index:05d}",
                prompt=prompt,
                items=tuple(group),
                mask_layout=build_mask(prompt_len, [max(1, it.token_estimate) for it in group]),
                seed=derive_seed(seed, index),
            )
        )
    return batches


@dataclass(frozen=True)
class PackedSegment:
    segment_id: str
    clip_ids: tuple[str, ...]
    total_duration_s: float


def pack_segments(
    clips: Sequence[tuple[str, float]], budget_s: float = DEFAULT_PACK_BUDGET_S
) -> list[PackedSegment]:
    """Next-fit packing in input order: open a new segment when the next clip
    would push the running total over the budget. Order is preserved within
    and across segments, so packed audio keeps sentence locality.
    """
    for clip_id, duration in clips:
        if duration > budget_s:
            raise ClipTooLong(clip_id, duration, budget_s)
        if duration <= 0:
            raise ValueError(f"clip {clip_id!r} has non-positive duration {duration}")
    segments: list[PackedSegment] = []
    ids: list[str] = []
    total = 0.0
    for clip_id, duration in clips:
        if ids and total + duration > budget_s:
            segments.append(
                PackedSegment(f"seg-{len(segments):05d}", tuple(ids), total)
            )
            ids, total = [], 0.0
        ids.append(clip_id)
        total += duration
    if ids:
        segments.append(PackedSegment(f"seg-{len(segments):05d}", tuple(ids), total))
    return segments


# -- reference fixture ---------------------------------------------------------


@dataclass(frozen=True)
class HoursTable:
    """Per-language real/synthetic hours with explicit (published) totals."""

    rows: tuple[dict, ...]
    total_real_hours: float
    total_synth_hours: float


def load_hours_table(path: str | Path) -> HoursTable:
    payload = read_json(path)
    rows = tuple(payload["languages"])
    total = payload.get("total")
    if total is not None:
        real, synth = total["real_hours"], total["synth_hours"]
    else:
        real = sum(r["real_hours"] for r in rows)
        synth = sum(r["synth_hours"] for r in rows)
    return HoursTable(rows=rows, total_real_hours=real, total_synth_hours=synth)


def load_reference_hours() -> HoursTable:
    """The bundled 500K-hour campaign statistics."""
    with resources.as_file(
        resources.files("speechbt").joinpath("data/hours_500k.json")
    ) as path:
        return load_hours_table(path)
