"""Text normalization, error-rate alignment, and the intelligibility quality gate.

The gate score is ``exp((WER_r - WER_s) / WER_r)``: synthetic speech is judged
relative to how well the same recognizer transcribes real speech in that
language, which makes scores comparable across languages. The score lives in
(0, e]; 1.0 means synthetic speech transcribes exactly as well as real speech.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DegenerateBaseline, EmptyReference
from .jsonio import dumps_canonical

# Languages scored per character instead of per word (whitespace is not a
# reliable word boundary there). Matched on the primary BCP-47 subtag.
DEFAULT_CHAR_SCORED = frozenset({"zh"})

DEFAULT_GATE_THRESHOLD = 0.01

REPORT_SCHEMA = "speechbt.report.v1"


@dataclass(frozen=True)
class NormalizedText:
    """Token sequence ready for error-rate scoring."""

    tokens: tuple[str, ...]
    language: str
    unit: str  # "word" or "character"

    def __post_init__(self):
        if self.unit not in ("word", "character"):
            raise ValueError(f"unit must be 'word' or 'character', got {self.unit!r}")

    def __len__(self) -> int:
        return len(self.tokens)


def _primary_subtag(language: str) -> str:
    return language.split("-")[0].lower()


def is_char_scored(language: str, char_scored: frozenset[str] = DEFAULT_CHAR_SCORED) -> bool:
    return _primary_subtag(language) in char_scored


def normalize_text(
    raw: str,
    language: str,
    char_scored: frozenset[str] = DEFAULT_CHAR_SCORED,
) -> NormalizedText:
    """Normalize ``raw`` into scoring tokens.

    Rules: NFC, lowercase, punctuation/symbol/control characters become
    spaces, whitespace collapses, digit strings stay verbatim. Character-scored
    languages tokenize per character with whitespace dropped. Deterministic and
    idempotent: normalizing a space-joined rendering of the output reproduces
    the same tokens.
    """
    text = unicodedata.normalize("NFC", raw).lower()
    kept = []
    for ch in text:
        cat = unicodedata.category(ch)
        if ch.isspace() or cat[0] in ("P", "S", "C"):
            kept.append(" ")
        else:
            kept.append(ch)
    collapsed = "".join(kept)
    if is_char_scored(language, char_scored):
        tokens = tuple(ch for ch in collapsed if ch != " ")
        unit = "character"
    else:
        tokens = tuple(collapsed.split())
        unit = "word"
    return NormalizedText(tokens=tokens, language=language, unit=unit)


@dataclass(frozen=True)
class AlignmentStats:
    """Edit counts from a minimum-cost alignment against a reference."""

    substitutions: int
    deletions: int
    insertions: int
    reference_length: int

    def __post_init__(self):
        if min(self.substitutions, self.deletions, self.insertions, self.reference_length) < 0:
            raise ValueError("alignment counts must be non-negative")
        if self.substitutions + self.deletions > self.reference_length:
            raise ValueError("substitutions + deletions cannot exceed reference length")

    @property
    def total_edits(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def error_rate(self) -> float:
        return self.total_edits / self.reference_length


def edit_alignment(reference: NormalizedText, hypothesis: NormalizedText) -> AlignmentStats:
    """Minimum-cost alignment under unit costs (sub = del = ins = 1).

    Among equal-cost alignments the split of edits is made deterministic by
    preferring match, then deletion, then substitution, then insertion during
    backtrace; the error rate itself never depends on the tie-break.

    Raises EmptyReference when the reference has no tokens.
    """
    if reference.language != hypothesis.language or reference.unit != hypothesis.unit:
        raise ValueError(
            f"reference ({reference.language}/{reference.unit}) and hypothesis "
            f"({hypothesis.language}/{hypothesis.unit}) are not comparable"
        )
    ref, hyp = reference.tokens, hypothesis.tokens
    if not ref:
        raise EmptyReference("reference has zero length")

    n, m = len(ref), len(hyp)
    # cost[i][j] = edit distance between ref[:i] and hyp[:j]
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        row, prev = cost[i], cost[i - 1]
        rtok = ref[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (rtok != hyp[j - 1])
            dele = prev[j] + 1
            ins = row[j - 1] + 1
            row[j] = sub if sub <= dele and sub <= ins else (dele if dele <= ins else ins)

    subs = dels = inss = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = cost[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and cost[i - 1][j - 1] == here:
            i, j = i - 1, j - 1  # match
        elif i > 0 and cost[i - 1][j] + 1 == here:
            dels += 1
            i -= 1
        elif i > 0 and j > 0 and cost[i - 1][j - 1] + 1 == here:
            subs += 1
            i, j = i - 1, j - 1
        else:
            inss += 1
            j -= 1
    return AlignmentStats(
        substitutions=subs, deletions=dels, insertions=inss, reference_length=n
    )


def corpus_error_rate(pairs: Sequence[tuple[NormalizedText, NormalizedText]]) -> float:
    """Pooled error rate: total edits over total reference length (micro-average).

    Raises EmptyReference when the pooled reference length is zero, which
    includes the empty pair list.
    """
    total_edits = 0
    total_ref = 0
    first = None
    for reference, hypothesis in pairs:
        if first is None:
            first = reference
        elif reference.language != first.language or reference.unit != first.unit:
            raise ValueError("all pairs must share one language and unit")
        stats = edit_alignment(reference, hypothesis)
        total_edits += stats.total_edits
        total_ref += stats.reference_length
    if total_ref == 0:
        raise EmptyReference("pooled reference length is zero")
    return total_edits / total_ref


def normalized_intelligibility(wer_real: float, wer_synthetic: float) -> float:
    """exp((wer_real - wer_synthetic) / wer_real); in (0, e], higher is better.

    Equals e when the synthetic WER is 0, and 1 when synthetic speech is
    transcribed exactly as well as real speech. Rates above 1.0 are legal
    (insertion-heavy hypotheses) and are never clamped.

    Raises DegenerateBaseline when wer_real is 0; callers that must produce a
    score anyway substitute a small configured floor.
    """
    if wer_real < 0 or wer_synthetic < 0:
        raise ValueError("error rates cannot be negative")
    if wer_real == 0:
        raise DegenerateBaseline("real-speech WER is zero; normalization undefined")
    return math.exp((wer_real - wer_synthetic) / wer_real)


@dataclass(frozen=True)
class IntelligibilityReport:
    """Per-language gate verdict for one synthesis checkpoint."""

    language: str
    wer_real: float
    wer_synthetic: float
    norm_i: float
    gate_threshold: float
    accepted: bool
    judge_id: str
    sample_count: int  # number of synthetic evaluation pairs scored

    def __post_init__(self):
        if self.wer_real <= 0 or self.wer_synthetic < 0 or self.sample_count < 0:
            raise ValueError("report rates and counts out of range")
        expected = math.exp((self.wer_real - self.wer_synthetic) / self.wer_real)
        if not math.isclose(self.norm_i, expected, rel_tol=1e-9):
            raise ValueError(f"norm_i {self.norm_i} inconsistent with stored rates")
        if not 0.0 < self.norm_i <= math.e * (1 + 1e-12):
            raise ValueError(f"norm_i {self.norm_i} outside (0, e]")
        if self.accepted != (self.norm_i >= self.gate_threshold):
            raise ValueError("accepted flag contradicts the threshold comparison")

    def to_json(self) -> str:
        payload = {
            "schema": REPORT_SCHEMA,
            "language": self.language,
            "wer_real": self.wer_real,
            "wer_synthetic": self.wer_synthetic,
            "norm_i": self.norm_i,
            "gate_threshold": self.gate_threshold,
            "accepted": self.accepted,
            "judge_id": self.judge_id,
            "sample_count": self.sample_count,
        }
        return dumps_canonical(payload)

    @classmethod
    def from_json(cls, text: str) -> "IntelligibilityReport":
        import json

        payload = json.loads(text)
        if payload.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"not a {REPORT_SCHEMA} document")
        payload.pop("schema")
        return cls(**payload)


def report_from_rates(
    language: str,
    wer_real: float,
    wer_synthetic: float,
    threshold: float = DEFAULT_GATE_THRESHOLD,
    judge_id: str = "unknown",
    sample_count: int = 0,
) -> IntelligibilityReport:
    """Build the gate report from precomputed corpus rates."""
    norm_i = normalized_intelligibility(wer_real, wer_synthetic)
    return IntelligibilityReport(
        language=language,
        wer_real=wer_real,
        wer_synthetic=wer_synthetic,
        norm_i=norm_i,
        gate_threshold=threshold,
        accepted=norm_i >= threshold,
        judge_id=judge_id,
        sample_count=sample_count,
    )


def gate_checkpoint(
    language: str,
    real_pairs: Iterable[tuple[str, str]],
    synthetic_pairs: Iterable[tuple[str, str]],
    threshold: float = DEFAULT_GATE_THRESHOLD,
    judge_id: str = "unknown",
    char_scored: frozenset[str] = DEFAULT_CHAR_SCORED,
) -> IntelligibilityReport:
    """Score a checkpoint from raw (reference, hypothesis) transcript pairs.

    Both channels are normalized with the same rules, pooled into WER_r and
    WER_s, and the checkpoint is accepted iff the normalized intelligibility
    reaches ``threshold``. Propagates EmptyReference and DegenerateBaseline.
    """

    def _normalize(pairs: Iterable[tuple[str, str]]):
        return [
            (normalize_text(ref, language, char_scored), normalize_text(hyp, language, char_scored))
            for ref, hyp in pairs
        ]

    real = _normalize(real_pairs)
    synth = _normalize(synthetic_pairs)
    if not real or not synth:
        raise EmptyReference("both evaluation pair sets must be non-empty")
    wer_real = corpus_error_rate(real)
    wer_synthetic = corpus_error_rate(synth)
    return report_from_rates(
        language,
        wer_real,
        wer_synthetic,
        threshold=threshold,
        judge_id=judge_id,
        sample_count=len(synth),
    )
