"""Deterministic mock TTS/ASR engine speaking the backend wire protocol.

The "audio" artifact is a JSON sidecar recording the seeded character
corruption of the input text, so a later transcribe request recovers exactly
what was "synthesized". Everything is a pure function of (engine config,
request): reruns produce identical bytes, in any process.

Corruption contract (independent implementations must match it exactly):

* per-item seed  = first 8 bytes, big-endian, of
                   blake2b("<config_seed>:<request_seed>:<item_id>")
* rng            = random.Random(per-item seed)
* for each character: corrupt iff rng.random() < char_error_rate; a corrupted
  character becomes candidates[rng.randrange(len(candidates))] where
  candidates is "a".."z" with the original character removed when present
* audio_ref      = "mock://" + hex of the first 8 bytes of
                   blake2b("<config_seed>:<request_seed>:<item_id>:<text>") + ".json"
* duration_s     = len(text) * seconds_per_char
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import random
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .jsonio import dumps_canonical

PROTO_VERSION = "speechbt.backend.v1"
ENGINE_ID = "mock-sim/1"
CORRUPTION_ALPHABET = "abcdefghijklmnopqrstuvwxyz"

MSG_MALFORMED = "unparseable request line"
MSG_BAD_REQUEST = "missing or invalid request fields"
MSG_UNKNOWN_REF = "unknown audio_ref"


@dataclass(frozen=True)
class MockEngineConfig:
    char_error_rate: float = 0.0
    seconds_per_char: float = 0.08
    seed: int = 0
    latency_fixed_per_call_s: float = 0.0
    latency_per_item_s: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.char_error_rate <= 1.0:
            raise ValueError("char_error_rate must be in [0, 1]")
        if self.seconds_per_char <= 0:
            raise ValueError("seconds_per_char must be positive")


def _blake64(material: str) -> int:
    return int.from_bytes(
        hashlib.blake2b(material.encode("utf-8"), digest_size=8).digest(), "big"
    )


def corrupt_text(text: str, rate: float, item_seed: int) -> str:
    rng = random.Random(item_seed)
    out = []
    for ch in text:
        if rng.random() < rate:
            candidates = CORRUPTION_ALPHABET.replace(ch, "")
            out.append(candidates[rng.randrange(len(candidates))])
        else:
            out.append(ch)
    return "".join(out)


def item_seed(config_seed: int, request_seed: int, item_id: object) -> int:
    return _blake64(f"{config_seed}:{request_seed}:{item_id}")


def audio_ref_for(config_seed: int, request_seed: int, item_id: object, text: str) -> str:
    return "mock://" + format(_blake64(f"{config_seed}:{request_seed}:{item_id}:{text}"), "016x") + ".json"


def mock_synthesize(
    items: list[dict],
    prompt_ref: str,
    seed: int,
    config: MockEngineConfig,
    store_dir: str | Path,
) -> list[dict]:
    """Per-item (audio_ref, duration_s); sidecars land in ``store_dir``."""
    store = Path(store_dir)
    store.mkdir(parents=True, exist_ok=True)
    results = []
    for item in items:
        text = item["text"]
        iid = item["id"]
        iseed = item_seed(config.seed, seed, iid)
        corrupted = corrupt_text(text, config.char_error_rate, iseed)
        ref = audio_ref_for(config.seed, seed, iid, text)
        duration = len(text) * config.seconds_per_char
        sidecar = {
            "text_corrupted": corrupted,
            "prompt_ref": prompt_ref,
            "duration_s": duration,
            "seed": iseed,
        }
        (store / ref[len("mock://"):]).write_text(
            dumps_canonical(sidecar) + "\n", encoding="utf-8"
        )
        results.append({"id": iid, "audio_ref": ref, "duration_s": duration})
    return results


def transcribe_lookup(items: list[dict], store_dir: str | Path) -> tuple[list[dict], list]:
    """Per-item stored text; returns (results, ids whose ref is unknown)."""
    store = Path(store_dir)
    results = []
    missing = []
    for item in items:
        ref = item["audio_ref"]
        path = store / ref[len("mock://"):] if ref.startswith("mock://") else store / ref
        if not path.is_file():
            missing.append(item["id"])
            continue
        sidecar = json.loads(path.read_text(encoding="utf-8"))
        results.append({"id": item["id"], "text": sidecar["text_corrupted"]})
    return results, missing


def mock_transcribe(items: list[dict], store_dir: str | Path) -> list[dict]:
    """Per-item stored text; raises UnknownAudioRef when any ref is unresolved.

    The protocol server uses :func:`transcribe_lookup` instead so it can
    answer with partial results.
    """
    from .errors import UnknownAudioRef

    results, missing = transcribe_lookup(items, store_dir)
    if missing:
        raise UnknownAudioRef(f"unresolved audio refs for items: {missing}")
    return results


class MockEngineServer:
    """Request-by-request protocol handler; the stdio loop is a thin shell."""

    def __init__(
        self,
        config: MockEngineConfig,
        store_dir: str | Path,
        languages: tuple[str, ...] = ("*",),
        max_batch: int = 64,
    ):
        self.config = config
        self.store_dir = Path(store_dir)
        self.languages = languages
        self.max_batch = max_batch
        self.shutdown_requested = False

    def _error(self, request_id, code: str, message: str, item_ids: list) -> dict:
        return {
            "request_id": request_id,
            "status": "error",
            "results": [],
            "error": {"code": code, "message": message, "item_ids": item_ids},
        }

    def _language_supported(self, language: str) -> bool:
        return "*" in self.languages or language in self.languages

    def handle(self, request: dict) -> dict:
        request_id = request.get("request_id")
        op = request.get("op")
        payload = request.get("payload")
        if request_id is None or op is None or not isinstance(payload, dict):
            return self._error(request_id, "bad_request", MSG_BAD_REQUEST, [])

        if op == "hello":
            proto = payload.get("proto")
            if proto is not None and proto != PROTO_VERSION:
                return self._error(request_id, "unsupported_proto", f"unsupported proto: {proto}", [])
            return {
                "request_id": request_id,
                "status": "ok",
                "results": {
                    "languages": list(self.languages),
                    "max_batch": self.max_batch,
                    "engine_id": ENGINE_ID,
                    "proto": PROTO_VERSION,
                },
            }

        if op == "shutdown":
            self.shutdown_requested = True
            return {"request_id": request_id, "status": "ok", "results": {}}

        if op not in ("synthesize_batch", "transcribe_batch"):
            return self._error(request_id, "unsupported_op", f"unsupported op: {op}", [])

        items = payload.get("items")
        if not isinstance(items, list) or not items:
            return self._error(request_id, "bad_request", MSG_BAD_REQUEST, [])
        language = payload.get("language", "")
        if not self._language_supported(language):
            return self._error(
                request_id,
                "unsupported_language",
                f"unsupported language: {language}",
                [item.get("id") for item in items],
            )

        self._simulate_latency(len(items))
        if op == "synthesize_batch":
            results = mock_synthesize(
                items,
                payload.get("prompt_ref", ""),
                payload.get("seed", 0),
                self.config,
                self.store_dir,
            )
            return {"request_id": request_id, "status": "ok", "results": results}

        results, missing = transcribe_lookup(items, self.store_dir)
        if missing and results:
            return {
                "request_id": request_id,
                "status": "partial",
                "results": results,
                "error": {"code": "unknown_audio_ref", "message": MSG_UNKNOWN_REF, "item_ids": missing},
            }
        if missing:
            return self._error(request_id, "unknown_audio_ref", MSG_UNKNOWN_REF, missing)
        return {"request_id": request_id, "status": "ok", "results": results}

    def handle_line(self, line: str) -> str:
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError
        except ValueError:
            return dumps_canonical(self._error(None, "malformed", MSG_MALFORMED, []))
        try:
            return dumps_canonical(self.handle(request))
        except Exception as exc:  # a bad request must never end the session
            return dumps_canonical(
                self._error(request.get("request_id"), "internal",
                            f"{type(exc).__name__}: {exc}", [])
            )

    def _simulate_latency(self, n_items: int) -> None:
        delay = self.config.latency_fixed_per_call_s + n_items * self.config.latency_per_item_s
        if delay > 0:
            time.sleep(delay)


def serve(server: MockEngineServer, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(server.handle_line(line) + "\n")
        stdout.flush()
        if server.shutdown_requested:
            break
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Deterministic mock TTS/ASR worker.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--char-error-rate", type=float, default=0.0)
    parser.add_argument("--seconds-per-char", type=float, default=0.08)
    parser.add_argument("--store", default=None,
                        help="sidecar directory (default: $SPEECHBT_MOCK_STORE or ./mock-store)")
    parser.add_argument("--languages", default="*", help="comma-separated, or *")
    parser.add_argument("--max-batch", type=int, default=64)
    parser.add_argument("--latency-per-call", type=float, default=0.0)
    parser.add_argument("--latency-per-item", type=float, default=0.0)
    args = parser.parse_args(argv)

    store = args.store or os.environ.get("SPEECHBT_MOCK_STORE") or "mock-store"
    config = MockEngineConfig(
        char_error_rate=args.char_error_rate,
        seconds_per_char=args.seconds_per_char,
        seed=args.seed,
        latency_fixed_per_call_s=args.latency_per_call,
        latency_per_item_s=args.latency_per_item,
    )
    server = MockEngineServer(
        config,
        store,
        languages=tuple(args.languages.split(",")),
        max_batch=args.max_batch,
    )
    return serve(server)


if __name__ == "__main__":
    raise SystemExit(main())
