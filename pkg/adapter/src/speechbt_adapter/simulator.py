"""Deterministic speech simulator implementing the shared corruption contract.

The contract (fixed by the speechbt.backend.v1 protocol so that independent
workers are byte-for-byte interchangeable):

* per-item seed  = first 8 bytes (big-endian) of
                   blake2b("<engine_seed>:<request_seed>:<item_id>")
* the corruption RNG is Python's Mersenne Twister seeded with that value
* each character is corrupted iff rng.random() < char_error_rate, and a
  corrupted character becomes candidates[rng.randrange(len(candidates))],
  candidates being a-z minus the original character when present
* audio_ref      = "mock://" + 16-hex-digit blake2b("<engine_seed>:<request_seed>:<item_id>:<text>") + ".json"
* duration_s     = len(text) * seconds_per_char
* the sidecar file <store>/<hex>.json records
  {"text_corrupted", "prompt_ref", "duration_s", "seed"}
"""

from __future__ import annotations

import hashlib
import json
import random
from pathlib import Path

LETTERS = "abcdefghijklmnopqrstuvwxyz"


def _hash64(material: str) -> int:
    digest = hashlib.blake2b(material.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class Simulator:
    def __init__(self, store: str | Path, seed: int = 0,
                 char_error_rate: float = 0.0, seconds_per_char: float = 0.08):
        if not 0.0 <= char_error_rate <= 1.0:
            raise ValueError("char_error_rate must be in [0, 1]")
        if seconds_per_char <= 0:
            raise ValueError("seconds_per_char must be positive")
        self.store = Path(store)
        self.seed = seed
        self.char_error_rate = char_error_rate
        self.seconds_per_char = seconds_per_char

    def _corrupt(self, text: str, item_seed: int) -> str:
        rng = random.Random(item_seed)
        chars = []
        for ch in text:
            if rng.random() < self.char_error_rate:
                candidates = LETTERS.replace(ch, "")
                chars.append(candidates[rng.randrange(len(candidates))])
            else:
                chars.append(ch)
        return "".join(chars)

    def synthesize(self, items: list[dict], prompt_ref: str, request_seed: int) -> list[dict]:
        self.store.mkdir(parents=True, exist_ok=True)
        out = []
        for item in items:
            text = item["text"]
            item_id = item["id"]
            iseed = _hash64(f"{self.seed}:{request_seed}:{item_id}")
            name = format(_hash64(f"{self.seed}:{request_seed}:{item_id}:{text}"), "016x") + ".json"
            duration = len(text) * self.seconds_per_char
            sidecar = {
                "text_corrupted": self._corrupt(text, iseed),
                "prompt_ref": prompt_ref,
                "duration_s": duration,
                "seed": iseed,
            }
            (self.store / name).write_text(
                json.dumps(sidecar, sort_keys=True, ensure_ascii=False,
                           separators=(",", ":")) + "\n",
                encoding="utf-8",
            )
            out.append({"id": item_id, "audio_ref": "mock://" + name, "duration_s": duration})
        return out

    def transcribe(self, items: list[dict]) -> tuple[list[dict], list]:
        found, missing = [], []
        for item in items:
            ref = item["audio_ref"]
            name = ref[len("mock://"):] if ref.startswith("mock://") else ref
            path = self.store / name
            if not path.is_file():
                missing.append(item["id"])
                continue
            sidecar = json.loads(path.read_text(encoding="utf-8"))
            found.append({"id": item["id"], "text": sidecar["text_corrupted"]})
        return found, missing
