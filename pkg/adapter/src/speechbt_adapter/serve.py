"""Request loop for the speechbt.backend.v1 protocol.

One JSON request per stdin line, one JSON response per stdout line, in order.
Bad input never kills the session: a malformed line or unsupported request
yields a single error response and the loop continues. Only a shutdown
request (or EOF) ends the worker, with exit code 0.
"""

from __future__ import annotations

import importlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .simulator import Simulator

PROTO = "speechbt.backend.v1"
SIM_ENGINE_ID = "mock-sim/1"

MSG_MALFORMED = "unparseable request line"
MSG_BAD_REQUEST = "missing or invalid request fields"
MSG_UNKNOWN_REF = "unknown audio_ref"


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


@dataclass
class AdapterConfig:
    mode: str = "simulate"  # simulate | wrap
    store: str = "adapter-store"
    seed: int = 0
    char_error_rate: float = 0.0
    seconds_per_char: float = 0.08
    languages: tuple[str, ...] = ("*",)
    max_batch: int = 64
    engine_spec: str = ""  # wrap mode: "module:attr" with synthesize/transcribe

    def __post_init__(self):
        if self.mode not in ("simulate", "wrap"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "wrap" and not self.engine_spec:
            raise ValueError("wrap mode needs --engine module:attr")


def load_wrapped_engine(spec: str):
    """Import the wrapped engine: an object with
    synthesize(text, prompt_path, language, seed) -> wav_path and
    transcribe(wav_path, language) -> text.
    """
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise ValueError(f"engine spec must be module:attr, got {spec!r}")
    obj = getattr(importlib.import_module(module_name), attr)
    return obj() if isinstance(obj, type) else obj


class AdapterServer:
    def __init__(self, config: AdapterConfig):
        self.config = config
        self.closing = False
        if config.mode == "simulate":
            self.sim = Simulator(
                config.store,
                seed=config.seed,
                char_error_rate=config.char_error_rate,
                seconds_per_char=config.seconds_per_char,
            )
            self.engine = None
            self.engine_id = SIM_ENGINE_ID
        else:
            self.sim = None
            self.engine = load_wrapped_engine(config.engine_spec)
            self.engine_id = getattr(self.engine, "engine_id", config.engine_spec)

    # -- response shapes ---------------------------------------------------

    def _error(self, request_id, code, message, item_ids):
        return {
            "request_id": request_id,
            "status": "error",
            "results": [],
            "error": {"code": code, "message": message, "item_ids": item_ids},
        }

    def _capabilities(self, request_id):
        return {
            "request_id": request_id,
            "status": "ok",
            "results": {
                "languages": list(self.config.languages),
                "max_batch": self.config.max_batch,
                "engine_id": self.engine_id,
                "proto": PROTO,
            },
        }

    # -- op handlers ---------------------------------------------------------

    def _synthesize(self, request_id, payload):
        items = payload["items"]
        if self.sim is not None:
            results = self.sim.synthesize(items, payload.get("prompt_ref", ""),
                                          payload.get("seed", 0))
        else:
            results = []
            for item in items:
                wav = self.engine.synthesize(
                    item["text"], payload.get("prompt_ref", ""),
                    payload.get("language", ""), payload.get("seed", 0),
                )
                duration = getattr(self.engine, "last_duration_s", 0.0)
                results.append({"id": item["id"], "audio_ref": str(wav),
                                "duration_s": duration})
        return {"request_id": request_id, "status": "ok", "results": results}

    def _transcribe(self, request_id, payload):
        items = payload["items"]
        if self.sim is not None:
            results, missing = self.sim.transcribe(items)
        else:
            results, missing = [], []
            for item in items:
                path = Path(item["audio_ref"])
                if not path.is_file():
                    missing.append(item["id"])
                    continue
                text = self.engine.transcribe(str(path), payload.get("language", ""))
                results.append({"id": item["id"], "text": text})
        if missing and results:
            return {
                "request_id": request_id,
                "status": "partial",
                "results": results,
                "error": {"code": "unknown_audio_ref", "message": MSG_UNKNOWN_REF,
                          "item_ids": missing},
            }
        if missing:
            return self._error(request_id, "unknown_audio_ref", MSG_UNKNOWN_REF, missing)
        return {"request_id": request_id, "status": "ok", "results": results}

    # -- dispatch ---------------------------------------------------------------

    def handle(self, request: dict) -> dict:
        request_id = request.get("request_id")
        op = request.get("op")
        payload = request.get("payload")
        if request_id is None or op is None or not isinstance(payload, dict):
            return self._error(request_id, "bad_request", MSG_BAD_REQUEST, [])
        if op == "hello":
            proto = payload.get("proto")
            if proto is not None and proto != PROTO:
                return self._error(request_id, "unsupported_proto",
                                   f"unsupported proto: {proto}", [])
            return self._capabilities(request_id)
        if op == "shutdown":
            self.closing = True
            return {"request_id": request_id, "status": "ok", "results": {}}
        if op not in ("synthesize_batch", "transcribe_batch"):
            return self._error(request_id, "unsupported_op", f"unsupported op: {op}", [])

        items = payload.get("items")
        if not isinstance(items, list) or not items:
            return self._error(request_id, "bad_request", MSG_BAD_REQUEST, [])
        language = payload.get("language", "")
        if "*" not in self.config.languages and language not in self.config.languages:
            return self._error(
                request_id, "unsupported_language",
                f"unsupported language: {language}",
                [item.get("id") for item in items],
            )
        if op == "synthesize_batch":
            return self._synthesize(request_id, payload)
        return self._transcribe(request_id, payload)

    def handle_line(self, line: str) -> str:
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError
        except ValueError:
            return canonical(self._error(None, "malformed", MSG_MALFORMED, []))
        try:
            return canonical(self.handle(request))
        except Exception as exc:  # a bad request must never end the session
            return canonical(
                self._error(request.get("request_id"), "internal",
                            f"{type(exc).__name__}: {exc}", [])
            )


def serve(server: AdapterServer, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(server.handle_line(line) + "\n")
        stdout.flush()
        if server.closing:
            break
    return 0
