from __future__ import annotations

import itertools
import math
import random
from functools import lru_cache

import pytest

from speechbt.errors import DegenerateBaseline, EmptyReference
from speechbt.metrics import (
    AlignmentStats,
    IntelligibilityReport,
    NormalizedText,
    corpus_error_rate,
    edit_alignment,
    gate_checkpoint,
    normalize_text,
    normalized_intelligibility,
    report_from_rates,
)


def words(tokens, language="en"):
    return NormalizedText(tokens=tuple(tokens), language=language, unit="word")


@lru_cache(maxsize=None)
def oracle_distance(a: tuple, b: tuple) -> int:
    """Independent recursive Levenshtein used to check the DP implementation."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        oracle_distance(a[1:], b[1:]) + (a[0] != b[0]),
        oracle_distance(a[1:], b) + 1,
        oracle_distance(a, b[1:]) + 1,
    )


# -- normalize_text ---------------------------------------------------------


def test_normalize_basic_en():
    assert normalize_text("Hello,  World!", "en").tokens == ("hello", "world")


def test_normalize_chinese_characters():
    out = normalize_text("你好 世界", "zh")
    assert out.tokens == ("你", "好", "世", "界")
    assert out.unit == "character"


def test_normalize_french_apostrophes():
    # Hand-applied rule table: NFC, lowercase, punctuation to space, collapse.
    assert normalize_text("C'est   l'été.", "fr").tokens == ("c", "est", "l", "été")


def test_normalize_digits_verbatim():
    assert normalize_text("room 42, floor 3", "en").tokens == ("room", "42", "floor", "3")


def test_normalize_empty_and_whitespace():
    assert normalize_text("", "en").tokens == ()
    assert normalize_text("  \t\n ", "en").tokens == ()


def test_normalize_no_empty_or_padded_tokens():
    rng = random.Random(7)
    alphabet = "aA?!.  ,汉语éÉ'3- ’$%"
    for _ in range(200):
        raw = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 40)))
        for lang in ("en", "zh"):
            out = normalize_text(raw, lang)
            assert all(tok and tok == tok.strip() for tok in out.tokens)


def test_normalize_idempotent():
    rng = random.Random(11)
    alphabet = "abZ .,!?汉字 déjà-vu '42　"
    for _ in range(200):
        raw = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 50)))
        for lang in ("en", "fr", "zh"):
            once = normalize_text(raw, lang)
            again = normalize_text(" ".join(once.tokens), lang)
            assert again.tokens == once.tokens


def test_char_scored_matches_primary_subtag():
    assert normalize_text("你好", "zh-CN").unit == "character"
    assert normalize_text("hello", "en-US").unit == "word"


# -- edit_alignment ---------------------------------------------------------


def test_alignment_identity():
    stats = edit_alignment(words(["a", "b", "c"]), words(["a", "b", "c"]))
    assert (stats.substitutions, stats.deletions, stats.insertions) == (0, 0, 0)
    assert stats.error_rate == 0.0


def test_alignment_single_deletion():
    stats = edit_alignment(words(["the", "cat", "sat"]), words(["the", "cat"]))
    assert (stats.substitutions, stats.deletions, stats.insertions) == (0, 1, 0)
    assert stats.error_rate == pytest.approx(1 / 3)


def test_alignment_single_insertion():
    stats = edit_alignment(words(["a"]), words(["b", "a"]))
    assert (stats.substitutions, stats.deletions, stats.insertions) == (0, 0, 1)
    assert stats.error_rate == 1.0


def test_alignment_empty_reference_raises():
    with pytest.raises(EmptyReference):
        edit_alignment(words([]), words(["a"]))


def test_alignment_language_mismatch_raises():
    with pytest.raises(ValueError):
        edit_alignment(words(["a"], "en"), words(["a"], "fr"))


def test_alignment_exhaustive_small_alphabet():
    # Every token sequence of length <= 4 over a 3-symbol alphabet, both sides.
    symbols = ("a", "b", "c")
    seqs = [
        seq
        for n in range(5)
        for seq in itertools.product(symbols, repeat=n)
    ]
    for ref in seqs:
        if not ref:
            continue
        for hyp in seqs:
            stats = edit_alignment(words(ref), words(hyp))
            assert stats.total_edits == oracle_distance(ref, hyp), (ref, hyp)
            assert stats.substitutions + stats.deletions <= len(ref)


def test_alignment_random_long_pairs_match_oracle():
    rng = random.Random(123)
    symbols = ["w%d" % i for i in range(6)]
    for _ in range(500):
        ref = tuple(rng.choice(symbols) for _ in range(rng.randrange(1, 12)))
        hyp = tuple(rng.choice(symbols) for _ in range(rng.randrange(0, 12)))
        stats = edit_alignment(words(ref), words(hyp))
        assert stats.total_edits == oracle_distance(ref, hyp)


def test_alignment_symmetric_total_edits():
    rng = random.Random(5)
    symbols = ["x", "y", "z", "w"]
    for _ in range(200):
        a = tuple(rng.choice(symbols) for _ in range(rng.randrange(1, 9)))
        b = tuple(rng.choice(symbols) for _ in range(rng.randrange(1, 9)))
        assert edit_alignment(words(a), words(b)).total_edits == edit_alignment(
            words(b), words(a)
        ).total_edits


def test_alignment_stats_invariant_checks():
    with pytest.raises(ValueError):
        AlignmentStats(substitutions=2, deletions=2, insertions=0, reference_length=3)
    with pytest.raises(ValueError):
        AlignmentStats(substitutions=-1, deletions=0, insertions=0, reference_length=3)


# -- corpus_error_rate ------------------------------------------------------


def test_corpus_rate_identity_pair():
    assert corpus_error_rate([(words(["a", "b"]), words(["a", "b"]))]) == 0.0


def test_corpus_rate_is_micro_average():
    # (1 edit, len 3) and (3 edits, len 7) pool to 4/10, not mean(1/3, 3/7).
    pairs = [
        (words(["a", "b", "c"]), words(["a", "b", "x"])),
        (words(list("defghij")), words(["d", "x", "x", "x", "h", "i", "j"])),
    ]
    assert corpus_error_rate(pairs) == pytest.approx(0.4)


def test_corpus_rate_matches_per_pair_dp_sums():
    rng = random.Random(77)
    symbols = ["t%d" % i for i in range(5)]
    pairs = []
    total_edits = 0
    total_len = 0
    for _ in range(50):
        ref = tuple(rng.choice(symbols) for _ in range(rng.randrange(1, 10)))
        hyp = tuple(rng.choice(symbols) for _ in range(rng.randrange(0, 10)))
        pairs.append((words(ref), words(hyp)))
        total_edits += oracle_distance(ref, hyp)
        total_len += len(ref)
    assert corpus_error_rate(pairs) == pytest.approx(total_edits / total_len, abs=1e-15)


def test_corpus_rate_empty_inputs():
    with pytest.raises(EmptyReference):
        corpus_error_rate([])


def test_corpus_rate_mixed_language_rejected():
    with pytest.raises(ValueError):
        corpus_error_rate(
            [
                (words(["a"], "en"), words(["a"], "en")),
                (words(["b"], "fr"), words(["b"], "fr")),
            ]
        )


# -- normalized_intelligibility ----------------------------------------------


def test_norm_i_fixed_point():
    assert normalized_intelligibility(0.126, 0.126) == 1.0


def test_norm_i_upper_bound():
    assert normalized_intelligibility(0.10, 0.0) == pytest.approx(math.e, abs=1e-12)


def test_norm_i_gate_boundary():
    # exp((0.10 - 0.5605) / 0.10) = exp(-4.605) ~ 0.0100
    assert normalized_intelligibility(0.10, 0.5605) == pytest.approx(0.0100, abs=1e-3)


def test_norm_i_monotone_and_positive():
    rng = random.Random(42)
    for _ in range(1000):
        wr = rng.uniform(0.01, 1.5)
        s1 = rng.uniform(0.0, 2.0)
        s2 = s1 + rng.uniform(1e-6, 1.0)
        hi = normalized_intelligibility(wr, s1)
        lo = normalized_intelligibility(wr, s2)
        assert hi > lo > 0.0
        assert normalized_intelligibility(wr, 0.0) == pytest.approx(math.e, rel=1e-12)
        assert normalized_intelligibility(wr, wr) == 1.0


def test_norm_i_scale_invariant():
    rng = random.Random(9)
    for _ in range(100):
        wr = rng.uniform(0.01, 1.0)
        ws = rng.uniform(0.0, 2.0)
        c = rng.uniform(0.1, 10.0)
        assert normalized_intelligibility(wr * c, ws * c) == pytest.approx(
            normalized_intelligibility(wr, ws), rel=1e-12
        )


def test_norm_i_degenerate_baseline():
    with pytest.raises(DegenerateBaseline):
        normalized_intelligibility(0.0, 0.3)
    with pytest.raises(ValueError):
        normalized_intelligibility(-0.1, 0.3)
    with pytest.raises(ValueError):
        normalized_intelligibility(0.1, -0.3)


# -- gate_checkpoint ---------------------------------------------------------


def test_gate_perfect_synthetic_accepted():
    real = [("the cat sat", "the bat sat"), ("hello there world", "hello world")]
    synth = [("good morning", "good morning"), ("nice day", "nice day")]
    report = gate_checkpoint("en", real, synth)
    assert report.wer_synthetic == 0.0
    assert report.norm_i == pytest.approx(math.e, abs=1e-12)
    assert report.accepted


def test_gate_rejects_below_threshold():
    report = report_from_rates("en", 0.10, 0.60, threshold=0.01)
    assert report.norm_i == pytest.approx(math.exp(-5), abs=1e-12)
    assert not report.accepted


def test_gate_equal_rates_accepted():
    report = report_from_rates("en", 0.10, 0.10, threshold=0.01)
    assert report.norm_i == 1.0
    assert report.accepted


def test_gate_accepts_exactly_at_threshold():
    report = report_from_rates("en", 0.5, 0.5, threshold=1.0)
    assert report.norm_i == 1.0
    assert report.accepted


def test_gate_empty_pairs_raise():
    with pytest.raises(EmptyReference):
        gate_checkpoint("en", [], [("a", "a")])


def test_gate_report_roundtrip_byte_identical():
    real = [("the quick brown fox", "the quick brown fax")]
    synth = [("jumps over the dog", "jumps over dog")]
    a = gate_checkpoint("en", real, synth, judge_id="judge-1").to_json()
    b = gate_checkpoint("en", real, synth, judge_id="judge-1").to_json()
    assert a == b
    restored = IntelligibilityReport.from_json(a)
    assert restored.to_json() == a
    assert restored.accepted == (restored.norm_i >= restored.gate_threshold)


def test_gate_report_schema_field():
    import json

    payload = json.loads(report_from_rates("cs", 0.2, 0.1).to_json())
    assert payload["schema"] == "speechbt.report.v1"
    assert set(payload) == {
        "schema",
        "language",
        "wer_real",
        "wer_synthetic",
        "norm_i",
        "gate_threshold",
        "accepted",
        "judge_id",
        "sample_count",
    }
