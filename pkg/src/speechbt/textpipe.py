"""Raw text to clean sentence store: segmentation, filtering, deduplication.

Sentence identity is an exact-match content hash over canonicalized text
(NFC, trimmed, whitespace collapsed, case preserved), so records that differ
only in surrounding whitespace collapse to one survivor. Near-duplicate
detection is out of scope.
"""

from __future__ import annotations

import hashlib
import os
import sqlite3
import tempfile
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .jsonio import dumps_canonical

SENTENCE_SCHEMA = "speechbt.sent.v1"

TERMINAL_MARKS = ".!?"
# Fullwidth stops end a sentence even without a following space; CJK text
# carries no word spacing.
FULLWIDTH_MARKS = "。！？"  # 。 ！ ？

# Short per-language guard lists against splitting after common
# abbreviations; consulted only for the ASCII period.
ABBREVIATIONS = {
    "en": {"dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.", "vs.",
           "etc.", "e.g.", "i.e.", "u.s."},
    "de": {"dr.", "nr.", "ca.", "bzw.", "usw.", "z.b.", "u.a."},
    "fr": {"m.", "mme.", "mlle.", "dr.", "etc."},
    "es": {"sr.", "sra.", "dr.", "ud.", "etc."},
    "nl": {"dhr.", "mevr.", "dr.", "bijv.", "enz."},
    "it": {"sig.", "dott.", "ecc."},
    "cs": {"např.", "tzv.", "atd."},
    "hu": {"pl.", "stb.", "dr."},
    "vi": {"tp.", "ts.", "ths."},
}
DEFAULT_ABBREVIATIONS = {"dr.", "etc.", "e.g.", "i.e.", "vs."}


def _guard_list(language: str) -> set[str]:
    return ABBREVIATIONS.get(language.split("-")[0].lower(), DEFAULT_ABBREVIATIONS)


def sentencize(document: str, language: str) -> list[str]:
    """Split a document into sentences.

    ASCII terminal marks (. ! ?) split when followed by whitespace or the end
    of the document unless the token they close is a known abbreviation;
    fullwidth marks (。！？) always split. Joining the output with single
    spaces preserves every non-whitespace character of the input in order.
    """
    guards = _guard_list(language)
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(document)
    while i < n:
        ch = document[i]
        boundary = False
        if ch in FULLWIDTH_MARKS:
            boundary = True
        elif ch in TERMINAL_MARKS and (i + 1 == n or document[i + 1].isspace()):
            if ch == ".":
                # token ending at this period, e.g. "Dr."
                j = i
                while j > start and not document[j - 1].isspace():
                    j -= 1
                boundary = document[j : i + 1].lower() not in guards
            else:
                boundary = True
        if boundary:
            chunk = document[start : i + 1].strip()
            if chunk:
                sentences.append(chunk)
            start = i + 1
        i += 1
    tail = document[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def canonicalize(text: str) -> str:
    """NFC, trim, collapse all whitespace runs to single spaces. Case kept."""
    return " ".join(unicodedata.normalize("NFC", text).split())


def content_id(language: str, text: str) -> int:
    """Stable 64-bit id over (language, canonicalized text)."""
    canonical = canonicalize(text)
    digest = hashlib.blake2b(
        f"{language}\x00{canonical}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class SentenceRecord:
    id: int
    language: str
    text: str
    source: str
    char_count: int
    alpha_ratio: float

    @classmethod
    def create(cls, text: str, language: str, source: str = "other") -> "SentenceRecord":
        canonical = canonicalize(text)
        non_ws = [ch for ch in canonical if not ch.isspace()]
        alpha = sum(1 for ch in non_ws if ch.isalpha())
        return cls(
            id=content_id(language, canonical),
            language=language,
            text=canonical,
            source=source,
            char_count=len(canonical),
            alpha_ratio=alpha / len(non_ws) if non_ws else 0.0,
        )

    def to_dict(self) -> dict:
        return {
            "schema": SENTENCE_SCHEMA,
            "id": self.id,
            "language": self.language,
            "text": self.text,
            "source": self.source,
            "char_count": self.char_count,
            "alpha_ratio": self.alpha_ratio,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SentenceRecord":
        return cls(
            id=payload["id"],
            language=payload["language"],
            text=payload["text"],
            source=payload["source"],
            char_count=payload["char_count"],
            alpha_ratio=payload["alpha_ratio"],
        )


@dataclass(frozen=True)
class FilterPolicy:
    min_chars: int = 8
    max_chars: int = 400
    min_alpha_ratio: float = 0.5


def filter_sentence(record: SentenceRecord, policy: FilterPolicy) -> str | None:
    """Return None to keep, or the rejection reason: short, long, nonalpha."""
    if record.char_count < policy.min_chars:
        return "short"
    if record.char_count > policy.max_chars:
        return "long"
    if record.alpha_ratio < policy.min_alpha_ratio:
        return "nonalpha"
    return None


class _SqliteIdSet:
    """Disk-backed id set for streams whose survivors do not fit in memory."""

    def __init__(self, path: str):
        self._conn = sqlite3.connect(path)
        self._conn.execute("PRAGMA journal_mode=OFF")
        self._conn.execute("PRAGMA synchronous=OFF")
        self._conn.execute("CREATE TABLE ids (id INTEGER PRIMARY KEY) WITHOUT ROWID")

    @staticmethod
    def _signed(value: int) -> int:
        # sqlite INTEGER is signed 64-bit; ids are unsigned.
        return value - 2**64 if value >= 2**63 else value

    def add_bulk(self, ids: Iterable[int]) -> None:
        self._conn.executemany(
            "INSERT OR IGNORE INTO ids VALUES (?)", ((self._signed(i),) for i in ids)
        )

    def add_new(self, value: int) -> bool:
        """Insert; True when the id was not present before."""
        cur = self._conn.execute(
            "INSERT OR IGNORE INTO ids VALUES (?)", (self._signed(value),)
        )
        return cur.rowcount == 1

    def close(self) -> None:
        self._conn.close()


def dedup_sentences(
    records: Iterable[SentenceRecord],
    max_ids_in_memory: int | None = None,
    spill_dir: str | Path | None = None,
) -> Iterator[SentenceRecord]:
    """Emit the first occurrence of each id, preserving input order.

    Ids are kept in a plain set until ``max_ids_in_memory`` is crossed, after
    which the whole set migrates to a temporary sqlite table so the stream can
    be arbitrarily larger than RAM.
    """
    seen: set[int] = set()
    spilled: _SqliteIdSet | None = None
    tmp: str | None = None
    try:
        for record in records:
            if spilled is not None:
                if spilled.add_new(record.id):
                    yield record
                continue
            if record.id in seen:
                continue
            seen.add(record.id)
            yield record
            if max_ids_in_memory is not None and len(seen) > max_ids_in_memory:
                fd, tmp = tempfile.mkstemp(
                    suffix=".ids.sqlite", dir=str(spill_dir) if spill_dir else None
                )
                os.close(fd)
                os.unlink(tmp)
                spilled = _SqliteIdSet(tmp)
                spilled.add_bulk(seen)
                seen = set()
    finally:
        if spilled is not None:
            spilled.close()
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)


def write_sentence_store(path: str | Path, records: Iterable[SentenceRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps_canonical(record.to_dict()))
            fh.write("\n")
            n += 1
    return n


def read_sentence_store(path: str | Path) -> Iterator[SentenceRecord]:
    import json

    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield SentenceRecord.from_dict(json.loads(line))
