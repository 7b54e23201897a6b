"""Batch dispatch over a worker pool.

Delivery is at-least-once: a batch whose worker dies is re-queued and may run
again elsewhere, and the recorder keeps exactly one row per
(batch_id, sentence_id) no matter how many attempts produced it. Each worker
connection is owned by one dispatcher thread; the recorder is a single
serialized sink.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from pathlib import Path
from typing import Sequence

from .backend import Capabilities, WorkerHandle, check_item_conservation, handshake
from .errors import AllWorkersFailed, ProtocolError, WorkerTimeout
from .jsonio import dumps_canonical, read_jsonl

logger = logging.getLogger(__name__)

DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_BASE_S = 0.05


class ResultRecorder:
    """Idempotent (batch_id, sentence_id)-keyed sink with an append journal."""

    def __init__(self, journal_path: str | Path | None = None):
        self._rows: dict[tuple[str, str], dict] = {}
        self._lock = threading.Lock()
        self._journal_path = Path(journal_path) if journal_path else None
        self._journal = None
        if self._journal_path is not None:
            if self._journal_path.exists():
                for row in read_jsonl(self._journal_path):
                    self._rows[(row["batch_id"], str(row["id"]))] = row
            self._journal = open(self._journal_path, "a", encoding="utf-8")

    def record(self, row: dict) -> bool:
        """Store a row; False when the key was already present (duplicate)."""
        key = (row["batch_id"], str(row["id"]))
        with self._lock:
            if key in self._rows:
                return False
            self._rows[key] = row
            if self._journal is not None:
                self._journal.write(dumps_canonical(row) + "\n")
                self._journal.flush()
            return True

    def completed_batches(self, jobs: Sequence[dict]) -> set[str]:
        """Batch ids for which every item already has a recorded row."""
        with self._lock:
            done = set()
            for job in jobs:
                keys = [(job["batch_id"], str(item["id"])) for item in job["items"]]
                if all(k in self._rows for k in keys):
                    done.add(job["batch_id"])
            return done

    def rows(self) -> list[dict]:
        with self._lock:
            return list(self._rows.values())

    def close(self) -> None:
        if self._journal is not None:
            self._journal.close()
            self._journal = None


def _eligible(caps: Capabilities | None, job: dict) -> bool:
    if caps is None:
        return False
    return caps.supports_language(job.get("language", "")) and len(job["items"]) <= caps.max_batch


class _Pool:
    """Shared work state guarded by one lock."""

    def __init__(self, jobs: Sequence[dict], max_attempts: int):
        self.lock = threading.Lock()
        self.pending: deque[tuple[dict, int]] = deque((job, 0) for job in jobs)
        self.inflight = 0
        self.failed: list[tuple[dict, str]] = []
        self.max_attempts = max_attempts
        self.members: set[int] = set()
        self.caps: dict[int, Capabilities] = {}

    def register(self, worker_id: int, caps: Capabilities) -> None:
        with self.lock:
            self.members.add(worker_id)
            self.caps[worker_id] = caps

    def unregister(self, worker_id: int) -> None:
        with self.lock:
            self.members.discard(worker_id)

    def take(self, worker_id: int) -> tuple[dict, int] | None:
        with self.lock:
            caps = self.caps.get(worker_id)
            for _ in range(len(self.pending)):
                job, attempt = self.pending.popleft()
                if _eligible(caps, job):
                    self.inflight += 1
                    return job, attempt
                self.pending.append((job, attempt))
            return None

    def done(self) -> None:
        with self.lock:
            self.inflight -= 1

    def requeue(self, job: dict, attempt: int) -> None:
        with self.lock:
            self.inflight -= 1
            if attempt + 1 >= self.max_attempts:
                self.failed.append((job, f"gave up after {attempt + 1} attempts"))
            else:
                self.pending.append((job, attempt + 1))

    def drain_unroutable(self) -> bool:
        """Fail pending jobs no registered worker can take. True when work remains."""
        with self.lock:
            if self.inflight:
                return True
            live = [self.caps[w] for w in self.members]
            routable = deque()
            while self.pending:
                job, attempt = self.pending.popleft()
                if any(_eligible(c, job) for c in live):
                    routable.append((job, attempt))
                else:
                    self.failed.append((job, "no live worker accepts this batch"))
            self.pending = routable
            return bool(self.pending)

    @property
    def idle(self) -> bool:
        with self.lock:
            return not self.pending and self.inflight == 0


def _worker_loop(
    worker: WorkerHandle,
    pool: _Pool,
    recorder: ResultRecorder,
    backoff_base_s: float,
) -> None:
    worker_id = id(worker)
    try:
        while True:
            slot = pool.take(worker_id)
            if slot is None:
                if pool.idle or not pool.drain_unroutable():
                    return
                time.sleep(0.01)
                continue
            job, attempt = slot
            if attempt > 0:
                time.sleep(backoff_base_s * (2 ** (attempt - 1)))
            try:
                response = worker.request(
                    "synthesize_batch",
                    {
                        "prompt_ref": job["prompt_ref"],
                        "language": job["language"],
                        "seed": job["seed"],
                        "items": job["items"],
                    },
                )
                if response.get("status") != "ok":
                    raise ProtocolError(
                        f"batch {job['batch_id']}: status {response.get('status')!r}"
                    )
                check_item_conservation(job["items"], response)
            except (ProtocolError, WorkerTimeout) as exc:
                logger.warning("worker %s failed on %s: %s", worker.name, job["batch_id"], exc)
                pool.requeue(job, attempt)
                if not worker.alive:
                    return  # dead workers leave the pool; the batch is re-queued
                continue
            texts = {str(item["id"]): item["text"] for item in job["items"]}
            engine_id = worker.capabilities.engine_id if worker.capabilities else "unknown"
            for result in response["results"]:
                recorder.record(
                    {
                        "batch_id": job["batch_id"],
                        "id": result["id"],
                        "language": job["language"],
                        "text": texts[str(result["id"])],
                        "audio_ref": result["audio_ref"],
                        "duration_s": result["duration_s"],
                        "prompt_id": job["prompt_id"],
                        "seed": job["seed"],
                        "engine_id": engine_id,
                    }
                )
            pool.done()
    finally:
        pool.unregister(worker_id)


def dispatch(
    jobs: Sequence[dict],
    workers: Sequence[WorkerHandle],
    recorder: ResultRecorder | None = None,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    backoff_base_s: float = DEFAULT_BACKOFF_BASE_S,
) -> list[dict]:
    """Run every job to completion; returns the recorded rows.

    ``jobs`` are dicts with batch_id, language, prompt_ref, prompt_id, seed,
    items [{id, text}]. Jobs already fully present in the recorder are
    skipped, which is what makes interrupted runs resumable.
    """
    recorder = recorder if recorder is not None else ResultRecorder()
    done = recorder.completed_batches(jobs)
    todo = [job for job in jobs if job["batch_id"] not in done]
    if not todo:
        return recorder.rows()

    ready: list[WorkerHandle] = []
    for worker in workers:
        try:
            if worker.capabilities is None:
                handshake(worker)
            ready.append(worker)
        except (ProtocolError, WorkerTimeout) as exc:
            logger.warning("quarantining worker %s: %s", worker.name, exc)
    if not ready:
        raise AllWorkersFailed("no worker survived the handshake")

    pool = _Pool(todo, max_attempts)
    for worker in ready:
        assert worker.capabilities is not None
        pool.register(id(worker), worker.capabilities)
    threads = [
        threading.Thread(
            target=_worker_loop, args=(w, pool, recorder, backoff_base_s), daemon=True
        )
        for w in ready
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    pool.drain_unroutable()

    if pool.failed:
        failed_ids = sorted({job["batch_id"] for job, _ in pool.failed})
        raise AllWorkersFailed(f"batches failed after retries: {', '.join(failed_ids)}")
    return recorder.rows()
