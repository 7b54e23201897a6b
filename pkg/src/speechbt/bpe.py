"""Byte-pair-encoding subword learning and append-only vocabulary expansion.

Classic word-frequency BPE: words are whitespace-delimited, each starts as its
character sequence, and the most frequent adjacent symbol pair is merged
iteratively. Merges never cross word boundaries. Ties on frequency resolve to
the lexicographically smallest (left, right) pair, so a given corpus always
yields one merge list regardless of worker count.
"""

from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

MERGES_HEADER = "#version: speechbt-bpe-1"

Pair = tuple[str, str]


def _count_words(texts: list[str]) -> Counter:
    counts: Counter = Counter()
    for text in texts:
        counts.update(text.split())
    return counts


def count_word_frequencies(corpus: Iterable, workers: int = 1) -> Counter:
    """Word-frequency table for a corpus of sentence records (or raw strings).

    With ``workers > 1`` the counting fans out over processes; the summed
    table is identical to the serial one.
    """
    texts = [getattr(record, "text", record) for record in corpus]
    if workers <= 1 or len(texts) < 2:
        return _count_words(texts)
    chunk = (len(texts) + workers - 1) // workers
    shards = [texts[i : i + chunk] for i in range(0, len(texts), chunk)]
    total: Counter = Counter()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for partial in pool.map(_count_words, shards):
            total.update(partial)
    return total


def _merge_word(symbols: tuple[str, ...], pair: Pair) -> tuple[str, ...]:
    """Replace occurrences of ``pair`` left to right, non-overlapping."""
    left, right = pair
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i + 1 < n and symbols[i] == left and symbols[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def _word_pairs(symbols: Sequence[str]) -> Counter:
    return Counter(zip(symbols, symbols[1:]))


def learn_bpe_from_counts(word_counts: Mapping[str, int], num_merges: int) -> list[Pair]:
    """Merge loop over an explicit word-frequency table.

    Returns min(num_merges, available) merges in creation order. Pair counts
    are maintained incrementally (only words containing the merged pair are
    rewritten); a lazy heap keeps selection at O(log n) per step.
    """
    if num_merges <= 0:
        return []
    words: list[tuple[tuple[str, ...], int]] = [
        (tuple(word), freq) for word, freq in word_counts.items() if freq > 0
    ]
    stats: Counter = Counter()
    where: defaultdict[Pair, set[int]] = defaultdict(set)
    for idx, (symbols, freq) in enumerate(words):
        for pair, n in _word_pairs(symbols).items():
            stats[pair] += n * freq
            where[pair].add(idx)

    heap: list[tuple[int, Pair]] = [(-count, pair) for pair, count in stats.items()]
    heapq.heapify(heap)

    merges: list[Pair] = []
    while len(merges) < num_merges and heap:
        neg, pair = heapq.heappop(heap)
        count = stats.get(pair, 0)
        if count != -neg:
            continue  # stale entry; the current count was pushed at update time
        if count < 1:
            break
        merges.append(pair)

        touched: Counter = Counter()
        for idx in sorted(where.pop(pair, ())):
            symbols, freq = words[idx]
            old_pairs = _word_pairs(symbols)
            if pair not in old_pairs:
                continue
            merged = _merge_word(symbols, pair)
            words[idx] = (merged, freq)
            new_pairs = _word_pairs(merged)
            for p, n in old_pairs.items():
                stats[p] -= n * freq
                touched[p] += 1
                if p not in new_pairs:
                    where[p].discard(idx)
            for p, n in new_pairs.items():
                stats[p] += n * freq
                touched[p] += 1
                where[p].add(idx)
        for p in touched:
            current = stats.get(p, 0)
            if current > 0:
                heapq.heappush(heap, (-current, p))
            else:
                stats.pop(p, None)
                where.pop(p, None)
    return merges


def learn_bpe(corpus: Iterable, num_merges: int, workers: int = 1) -> list[Pair]:
    """Learn ``num_merges`` merges from a stream of sentence records."""
    return learn_bpe_from_counts(count_word_frequencies(corpus, workers=workers), num_merges)


@dataclass(frozen=True)
class BpeVocabDelta:
    """Append-only vocabulary change: the base is never edited or reordered."""

    base_vocab: tuple[str, ...]
    learned_merges: tuple[Pair, ...]
    new_subwords: tuple[str, ...]

    def expanded(self) -> list[str]:
        return list(self.base_vocab) + list(self.new_subwords)


def expand_vocab(base_vocab: Sequence[str], merges: Sequence[Pair]) -> BpeVocabDelta:
    """Collect merge products absent from ``base_vocab``, in creation order."""
    base = tuple(base_vocab)
    if len(set(base)) != len(base):
        raise ValueError("base vocabulary entries must be unique")
    known = set(base)
    new_subwords = []
    for left, right in merges:
        product = left + right
        if product not in known:
            known.add(product)
            new_subwords.append(product)
    return BpeVocabDelta(
        base_vocab=base,
        learned_merges=tuple((left, right) for left, right in merges),
        new_subwords=tuple(new_subwords),
    )


def write_merges(path: str | Path, merges: Sequence[Pair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MERGES_HEADER + "\n")
        for left, right in merges:
            fh.write(f"{left} {right}\n")


def read_merges(path: str | Path) -> list[Pair]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MERGES_HEADER:
        raise ValueError(f"merges file must start with {MERGES_HEADER!r}")
    merges = []
    for line in lines[1:]:
        if not line.strip():
            continue
        left, sep, right = line.partition(" ")
        if not sep or not left or not right:
            raise ValueError(f"malformed merge line: {line!r}")
        merges.append((left, right))
    return merges
