from __future__ import annotations

import random
import sys
from pathlib import Path

import pytest

from speechbt.prompts import PromptClip, SpeakerEmbedding, write_prompt_pool

MOCK_WORKER = f"{sys.executable} -m speechbt.mockengine"

WORDS = [
    "river", "stone", "window", "quiet", "orange", "travel", "signal", "garden",
    "yellow", "market", "simple", "branch", "winter", "copper", "velvet", "harbor",
]


def make_sentences(language: str, n: int, seed: int) -> list[str]:
    rng = random.Random(seed)
    sentences = []
    for i in range(n):
        body = " ".join(rng.choice(WORDS) for _ in range(rng.randrange(3, 7)))
        sentences.append(f"the {body} number {i} for {language}.")
    return sentences


def make_pool_clips(n: int, seed: int) -> list[PromptClip]:
    rng = random.Random(seed)
    return [
        PromptClip(
            prompt_id=f"voice-{i:02d}",
            audio_ref=f"prompts/voice-{i:02d}.wav",
            duration_s=4.0 + (i % 5),
            source="emilia",
            embedding=SpeakerEmbedding(
                vector=tuple(rng.gauss(0, 1) for _ in range(16)), encoder_id="enc-fix"
            ),
        )
        for i in range(n)
    ]


def build_workspace(
    root: Path,
    languages: dict[str, int],
    char_error_rate: float = 0.0,
    real_char_error_rate: float | None = None,
    total_synth_hours: float = 2.0,
    gate_threshold: float = 0.01,
    seed: int = 777,
    extra_worker_flags: str = "",
    eval_sentences: int = 10,
) -> Path:
    """Write raw inputs plus a config INI; returns the config path."""
    raw = root / "raw"
    raw.mkdir(parents=True, exist_ok=True)
    language_sections = []
    for i, (language, count) in enumerate(sorted(languages.items())):
        lines = make_sentences(language, count, seed=seed + i)
        (raw / f"{language}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        language_sections.append(
            f"[language.{language}]\n"
            f"text = raw/{language}.txt\n"
            f"source = wikipedia\n"
            f"real_hours = {50 + 10 * i}\n"
            f"weight = 1.0\n"
        )
    write_prompt_pool(raw / "pool.jsonl", make_pool_clips(8, seed=seed))

    worker = (
        f"{MOCK_WORKER} --seed 5 --char-error-rate {char_error_rate} "
        f"--seconds-per-char 0.08 {extra_worker_flags}".strip()
    )
    real_line = ""
    if real_char_error_rate is not None:
        real_line = (
            f"real_command = {MOCK_WORKER} --seed 6 "
            f"--char-error-rate {real_char_error_rate} --seconds-per-char 0.08\n"
        )
    config_text = (
        f"[run]\nseed = {seed}\n\n"
        + "\n".join(language_sections)
        + "\n[prompts]\n"
        "pool_file = raw/pool.jsonl\n\n"
        "[bpe]\n"
        "num_merges = 25\n\n"
        "[plan]\n"
        f"total_synth_hours = {total_synth_hours}\n"
        "policy = uniform\n\n"
        "[gate]\n"
        f"threshold = {gate_threshold}\n"
        f"eval_sentences = {eval_sentences}\n\n"
        "[workers]\n"
        f"command = {worker}\n"
        f"{real_line}"
        "count = 2\n"
        "timeout_s = 30\n"
    )
    config_path = root / "speechbt.ini"
    config_path.write_text(config_text, encoding="utf-8")
    return config_path


@pytest.fixture
def workspace(tmp_path):
    return build_workspace(tmp_path, {"en": 100, "de": 100})
