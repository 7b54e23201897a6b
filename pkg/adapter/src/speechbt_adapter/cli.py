"""speechbt-adapter: serve the backend protocol on stdin/stdout."""

from __future__ import annotations

import argparse
import os

from .serve import AdapterConfig, AdapterServer, serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="speechbt-adapter",
        description="Worker speaking speechbt.backend.v1: deterministic "
        "simulator or wrapper around a real TTS/ASR runtime.",
    )
    parser.add_argument("--mode", choices=["simulate", "wrap"], default="simulate")
    parser.add_argument("--store", default=None,
                        help="artifact directory (default: $SPEECHBT_MOCK_STORE or ./adapter-store)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--char-error-rate", type=float, default=0.0)
    parser.add_argument("--seconds-per-char", type=float, default=0.08)
    parser.add_argument("--languages", default="*", help="comma-separated, or *")
    parser.add_argument("--max-batch", type=int, default=64)
    parser.add_argument("--engine", default="",
                        help="wrap mode: module:attr exposing synthesize/transcribe")
    args = parser.parse_args(argv)

    store = args.store or os.environ.get("SPEECHBT_MOCK_STORE") or "adapter-store"
    config = AdapterConfig(
        mode=args.mode,
        store=store,
        seed=args.seed,
        char_error_rate=args.char_error_rate,
        seconds_per_char=args.seconds_per_char,
        languages=tuple(args.languages.split(",")),
        max_batch=args.max_batch,
        engine_spec=args.engine,
    )
    return serve(AdapterServer(config))


if __name__ == "__main__":
    raise SystemExit(main())
