from __future__ import annotations

import random

import pytest

from speechbt.textpipe import (
    FilterPolicy,
    SentenceRecord,
    canonicalize,
    content_id,
    dedup_sentences,
    filter_sentence,
    read_sentence_store,
    sentencize,
    write_sentence_store,
)


# -- sentencize ---------------------------------------------------------------


def test_sentencize_two_terminal_marks():
    assert sentencize("A b. C d!", "en") == ["A b.", "C d!"]


def test_sentencize_abbreviation_guard():
    assert sentencize("Dr. Smith left.", "en") == ["Dr. Smith left."]


def test_sentencize_cjk_marks_need_no_space():
    assert sentencize("你好。再见。", "zh") == ["你好。", "再见。"]


def test_sentencize_question_exclamation_runs():
    assert sentencize("What?! Really? Yes.", "en") == ["What?!", "Really?", "Yes."]


def test_sentencize_internal_period_not_followed_by_space():
    assert sentencize("Version 1.2 shipped. Done.", "en") == [
        "Version 1.2 shipped.",
        "Done.",
    ]


def test_sentencize_empty_document():
    assert sentencize("", "en") == []
    assert sentencize("   \n\t ", "en") == []


def test_sentencize_tail_without_terminal():
    assert sentencize("one. two without end", "en") == ["one.", "two without end"]


def test_sentencize_character_conservation():
    rng = random.Random(31)
    pieces = ["Dr.", "word", "汉字。", "x!", "y?", "1.5", "e.g.", "tail", " ", "\n", "z."]
    for _ in range(300):
        doc = "".join(rng.choice(pieces) for _ in range(rng.randrange(0, 30)))
        joined = " ".join(sentencize(doc, "en"))
        assert [c for c in joined if not c.isspace()] == [
            c for c in doc if not c.isspace()
        ]


# -- SentenceRecord / canonicalization ---------------------------------------


def test_record_canonicalizes_text():
    rec = SentenceRecord.create("  Hello\n  World  ", "en", "wikipedia")
    assert rec.text == "Hello World"
    assert rec.char_count == len("Hello World")
    assert "\n" not in rec.text


def test_record_id_ignores_surrounding_whitespace():
    a = SentenceRecord.create("Hello World", "en")
    b = SentenceRecord.create("  Hello   World \t", "en")
    assert a.id == b.id
    assert a.id == content_id("en", "Hello World")


def test_record_id_depends_on_language_and_case():
    text = "Hello World"
    assert SentenceRecord.create(text, "en").id != SentenceRecord.create(text, "fr").id
    assert SentenceRecord.create(text, "en").id != SentenceRecord.create(text.lower(), "en").id


def test_record_id_is_64_bit():
    rec = SentenceRecord.create("some sentence", "en")
    assert 0 <= rec.id < 2**64


def test_alpha_ratio_counts_non_whitespace_denominator():
    rec = SentenceRecord.create("1234 abcd", "en")
    assert rec.alpha_ratio == pytest.approx(0.5)
    assert SentenceRecord.create("...", "en").alpha_ratio == 0.0
    assert SentenceRecord.create("", "en").alpha_ratio == 0.0


def test_canonicalize_nfc():
    # e + combining acute composes to the precomposed character
    assert canonicalize("Café") == "Café"


# -- filter_sentence ----------------------------------------------------------


def test_filter_short():
    rec = SentenceRecord.create("tiny.", "en")
    assert rec.char_count == 5
    assert filter_sentence(rec, FilterPolicy()) == "short"


def test_filter_long():
    rec = SentenceRecord.create("x" * 401, "en")
    assert filter_sentence(rec, FilterPolicy()) == "long"


def test_filter_alpha_ratio_boundary_keeps():
    rec = SentenceRecord.create("1234 abcd", "en")
    assert filter_sentence(rec, FilterPolicy()) is None  # 0.5 >= 0.5


def test_filter_nonalpha():
    rec = SentenceRecord.create("12345 678!", "en")
    assert filter_sentence(rec, FilterPolicy()) == "nonalpha"


def test_filter_keep():
    rec = SentenceRecord.create("a perfectly ordinary sentence", "en")
    assert filter_sentence(rec, FilterPolicy()) is None


def test_filter_order_independent_kept_set():
    rng = random.Random(3)
    records = [
        SentenceRecord.create("word " * rng.randrange(1, 20), "en")
        for _ in range(50)
    ] + [SentenceRecord.create("!?" * rng.randrange(1, 30), "en") for _ in range(20)]
    policy = FilterPolicy()
    kept = {r.id for r in records if filter_sentence(r, policy) is None}
    shuffled = records[:]
    rng.shuffle(shuffled)
    assert {r.id for r in shuffled if filter_sentence(r, policy) is None} == kept


# -- dedup_sentences ----------------------------------------------------------


def _mk(text, language="en"):
    return SentenceRecord.create(text, language)


def test_dedup_keeps_first_occurrence():
    s1, s2 = _mk("alpha beta"), _mk("gamma delta")
    assert list(dedup_sentences([s1, s1, s2])) == [s1, s2]


def test_dedup_collapses_whitespace_variants():
    out = list(dedup_sentences([_mk("alpha  beta"), _mk(" alpha beta ")]))
    assert len(out) == 1


def test_dedup_idempotent():
    rng = random.Random(17)
    records = [_mk(f"sentence number {rng.randrange(40)}") for _ in range(200)]
    once = list(dedup_sentences(records))
    assert list(dedup_sentences(once)) == once


def test_dedup_large_stream_matches_set_oracle():
    rng = random.Random(99)
    vocab = [f"w{i}" for i in range(300)]
    records = []
    for _ in range(100_000):
        text = " ".join(rng.choice(vocab) for _ in range(3))
        records.append(_mk(text))
    seen = set()
    expected = []
    for r in records:
        if r.id not in seen:
            seen.add(r.id)
            expected.append(r.id)
    got = [r.id for r in dedup_sentences(records)]
    assert got == expected
    assert len(got) < len(records)  # duplicates were actually planted


def test_dedup_spill_path_equals_in_memory(tmp_path):
    rng = random.Random(4)
    vocab = [f"tok{i}" for i in range(50)]
    records = [
        _mk(" ".join(rng.choice(vocab) for _ in range(2))) for _ in range(5000)
    ]
    plain = [r.id for r in dedup_sentences(records)]
    spilled = [
        r.id
        for r in dedup_sentences(records, max_ids_in_memory=100, spill_dir=tmp_path)
    ]
    assert spilled == plain


# -- store I/O ----------------------------------------------------------------


def test_sentence_store_roundtrip(tmp_path):
    records = [_mk("first sentence here"), _mk("második mondat itt", "hu")]
    path = tmp_path / "sent.jsonl"
    assert write_sentence_store(path, records) == 2
    back = list(read_sentence_store(path))
    assert back == records
    first_line = path.read_text(encoding="utf-8").splitlines()[0]
    assert '"schema":"speechbt.sent.v1"' in first_line
