from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

GOLDEN_REQUESTS = Path(__file__).parent / "data" / "golden_requests.jsonl"

# identical engine knobs for every worker under comparison
ENGINE_FLAGS = ["--seed", "11", "--char-error-rate", "0.15", "--seconds-per-char", "0.08"]


def primary_mock_cmd(store: Path) -> list[str]:
    # the reference worker, reached through its public CLI only
    return [sys.executable, "-m", "speechbt.mockengine", "--store", str(store), *ENGINE_FLAGS]


def adapter_cmd(store: Path, mode: str = "simulate", extra: list[str] | None = None) -> list[str]:
    return [
        sys.executable, "-m", "speechbt_adapter.cli",
        "--mode", mode, "--store", str(store), *ENGINE_FLAGS, *(extra or []),
    ]


def replay(cmd: list[str], lines: list[str]) -> list[str]:
    """Feed raw request lines to a worker; return its raw response lines."""
    proc = subprocess.Popen(
        cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, encoding="utf-8"
    )
    responses = []
    try:
        for line in lines:
            proc.stdin.write(line.rstrip("\n") + "\n")
            proc.stdin.flush()
            responses.append(proc.stdout.readline().rstrip("\n"))
    finally:
        proc.stdin.close()
        proc.wait(timeout=20)
    return responses


def golden_lines() -> list[str]:
    return [
        line
        for line in GOLDEN_REQUESTS.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


def golden_requests() -> list[dict]:
    return [json.loads(line) for line in golden_lines()]
