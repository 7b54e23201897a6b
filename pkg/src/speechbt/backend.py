"""Client side of the worker wire protocol.

One JSON request per line on the worker's stdin, one JSON response per line
on its stdout, strictly ordered per worker. Audio travels by opaque reference,
never inline.
"""

from __future__ import annotations

import json
import os
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass

from .errors import ProtocolError, WorkerTimeout
from .jsonio import dumps_canonical
from .mockengine import PROTO_VERSION


@dataclass(frozen=True)
class Capabilities:
    languages: tuple[str, ...]
    max_batch: int
    engine_id: str

    def supports_language(self, language: str) -> bool:
        return "*" in self.languages or language in self.languages


class WorkerHandle:
    """Owns one worker subprocess and its request/response stream."""

    def __init__(self, command: str | list[str], env: dict | None = None,
                 timeout_s: float = 60.0, name: str | None = None):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.name = name or argv[0]
        self.timeout_s = timeout_s
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            env={**os.environ, **(env or {})},
        )
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._counter = 0
        self.capabilities: Capabilities | None = None

    def _read_loop(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    @property
    def alive(self) -> bool:
        return self._proc.poll() is None

    def next_request_id(self) -> str:
        self._counter += 1
        return f"req-{self._counter:08d}"

    def send(self, request: dict) -> None:
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(dumps_canonical(request) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"worker {self.name}: pipe closed") from exc

    def recv(self, timeout_s: float | None = None) -> dict:
        try:
            line = self._lines.get(timeout=timeout_s or self.timeout_s)
        except queue.Empty:
            raise WorkerTimeout(f"worker {self.name}: no response within timeout")
        if line is None:
            raise ProtocolError(f"worker {self.name}: stream closed")
        try:
            response = json.loads(line)
        except ValueError as exc:
            raise ProtocolError(f"worker {self.name}: unparseable response") from exc
        if not isinstance(response, dict):
            raise ProtocolError(f"worker {self.name}: response is not an object")
        return response

    def request(self, op: str, payload: dict, timeout_s: float | None = None) -> dict:
        request_id = self.next_request_id()
        self.send({"op": op, "request_id": request_id, "payload": payload})
        response = self.recv(timeout_s)
        if response.get("request_id") != request_id:
            raise ProtocolError(
                f"worker {self.name}: request_id mismatch "
                f"({response.get('request_id')!r} != {request_id!r})"
            )
        return response

    def kill(self) -> None:
        if self.alive:
            self._proc.kill()
        self._proc.wait()

    def close(self) -> int:
        """Polite shutdown; returns the exit code."""
        if self.alive:
            try:
                self.request("shutdown", {}, timeout_s=5.0)
            except (ProtocolError, WorkerTimeout):
                pass
            try:
                self._proc.stdin.close()  # type: ignore[union-attr]
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        return self._proc.returncode


def handshake(worker: WorkerHandle, timeout_s: float | None = None) -> Capabilities:
    """Hello exchange; the result decides what may be routed to this worker."""
    response = worker.request("hello", {"proto": PROTO_VERSION}, timeout_s)
    if response.get("status") != "ok":
        raise ProtocolError(f"worker {worker.name}: hello rejected: {response!r}")
    caps = response.get("results")
    if not isinstance(caps, dict):
        raise ProtocolError(f"worker {worker.name}: capabilities missing")
    if caps.get("proto") != PROTO_VERSION:
        raise ProtocolError(
            f"worker {worker.name}: protocol {caps.get('proto')!r}, need {PROTO_VERSION!r}"
        )
    try:
        capabilities = Capabilities(
            languages=tuple(caps["languages"]),
            max_batch=int(caps["max_batch"]),
            engine_id=str(caps["engine_id"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"worker {worker.name}: malformed capabilities") from exc
    worker.capabilities = capabilities
    return capabilities


def check_item_conservation(request_items: list[dict], response: dict) -> None:
    """Every request item id must appear exactly once in results + error ids."""
    expected = [item["id"] for item in request_items]
    got = [r["id"] for r in response.get("results") or []]
    error = response.get("error")
    if error:
        got.extend(error.get("item_ids") or [])
    if sorted(map(str, got)) != sorted(map(str, expected)):
        raise ProtocolError(
            f"item ids not conserved: request {expected!r} vs response {got!r}"
        )
