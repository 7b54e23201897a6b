"""Stage-ordered run pipeline with resume markers.

A run directory holds numbered stage subdirectories, each finalized by a DONE
marker; re-invoking skips finished stages. Every artifact a stage writes is a
deterministic function of (config, inputs, seed), so an interrupted and
resumed run converges on byte-identical outputs. The synthesize stage
additionally journals batch results as they arrive, surviving worker crashes
and process kills mid-stage.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path

from .backend import WorkerHandle, handshake
from .bpe import expand_vocab, learn_bpe, write_merges
from .config import RunConfig, store_config
from .dispatch import ResultRecorder, dispatch
from .errors import ConfigError, EmptyReference, ProtocolError, SpeechBtError
from .jsonio import read_json, read_jsonl, write_json, write_jsonl
from .metrics import (
    IntelligibilityReport,
    corpus_error_rate,
    normalize_text,
    report_from_rates,
)
from .prompts import dedup_pool, prompt_cycle, read_prompt_pool, write_prompt_pool
from .scheduler import (
    PLAN_SCHEMA,
    derive_seed,
    make_batches,
    pack_segments,
    plan_budgets,
)
from .textpipe import (
    SentenceRecord,
    dedup_sentences,
    filter_sentence,
    read_sentence_store,
    sentencize,
    write_sentence_store,
)

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = "speechbt.manifest.v1"
SEGMENT_SCHEMA = "speechbt.seg.v1"
VOCAB_SCHEMA = "speechbt.vocab.v1"

STAGE_PREPARE_TEXT = "01-prepare-text"
STAGE_PREPARE_PROMPTS = "02-prepare-prompts"
STAGE_EXPAND_VOCAB = "03-expand-vocab"
STAGE_PLAN = "04-plan"
STAGE_GATE = "05-gate"
STAGE_SYNTHESIZE = "06-synthesize"
STAGE_PACK = "07-pack"
STAGE_REPORT = "08-report"


class StageFailure(SpeechBtError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


class RunLock:
    """One writer per run directory. Locks left by dead processes are stolen."""

    def __init__(self, run_dir: Path):
        self.path = run_dir / ".lock"

    @staticmethod
    def _holder_alive(path: Path) -> bool:
        try:
            pid = int(path.read_text())
        except (OSError, ValueError):
            return False
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return False
        except PermissionError:
            return True  # exists, owned by someone else
        return True

    def __enter__(self):
        for attempt in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                break
            except FileExistsError:
                if attempt == 0 and not self._holder_alive(self.path):
                    logger.warning("removing stale lock %s", self.path)
                    self.path.unlink(missing_ok=True)
                    continue
                raise SpeechBtError(
                    f"run directory is locked by another process ({self.path})"
                ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc_info):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass


def _stage_dir(run_dir: Path, stage: str) -> Path:
    path = run_dir / stage
    path.mkdir(parents=True, exist_ok=True)
    return path


def _documents(config: RunConfig, language: str):
    """Yield (document, source) from the language's input files.

    Plain-text inputs contribute one document per non-empty line; JSONL inputs
    carry {"text": ..., "source": ...} objects.
    """
    import json

    spec = config.languages[language]
    for name in spec.text_files:
        path = config.resolve_path(name)
        if not path.is_file():
            raise ConfigError(f"language {language}: input file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if path.suffix == ".jsonl":
                    row = json.loads(line)
                    yield row["text"], row.get("source", spec.source)
                else:
                    yield line, spec.source


def stage_prepare_text(config: RunConfig, run_dir: Path) -> None:
    out = _stage_dir(run_dir, STAGE_PREPARE_TEXT)
    stats = {}
    for language in sorted(config.languages):
        policy = config.filter_for(language)
        rejected = {"short": 0, "long": 0, "nonalpha": 0}

        def survivors():
            for document, source in _documents(config, language):
                for sentence in sentencize(document, language):
                    record = SentenceRecord.create(sentence, language, source)
                    reason = filter_sentence(record, policy)
                    if reason is None:
                        yield record
                    else:
                        rejected[reason] += 1

        deduped = dedup_sentences(
            survivors(),
            max_ids_in_memory=config.dedup_max_ids_in_memory or None,
            spill_dir=out,
        )
        kept = write_sentence_store(out / f"{language}.sentences.jsonl", deduped)
        stats[language] = {"kept": kept, "rejected": rejected}
    write_json(out / "stats.json", stats)


def stage_prepare_prompts(config: RunConfig, run_dir: Path) -> None:
    out = _stage_dir(run_dir, STAGE_PREPARE_PROMPTS)
    if not config.prompts_pool_file:
        raise ConfigError("[prompts] pool_file is required to prepare prompts")
    clips, dropped = read_prompt_pool(
        config.resolve_path(config.prompts_pool_file),
        min_duration_s=config.prompts_min_duration_s,
        max_duration_s=config.prompts_max_duration_s,
    )
    retained = dedup_pool(clips, threshold=config.prompts_dedup_threshold)
    write_prompt_pool(out / "pool.jsonl", retained, retained=True)
    write_json(
        out / "stats.json",
        {
            "input_clips": len(clips) + dropped,
            "duration_filtered": dropped,
            "near_duplicates_removed": len(clips) - len(retained),
            "retained": len(retained),
        },
    )


def _sentence_store(run_dir: Path, language: str) -> Path:
    path = run_dir / STAGE_PREPARE_TEXT / f"{language}.sentences.jsonl"
    if not path.is_file():
        raise FileNotFoundError(f"sentence store missing: {path}")
    return path


def stage_expand_vocab(config: RunConfig, run_dir: Path) -> None:
    out = _stage_dir(run_dir, STAGE_EXPAND_VOCAB)
    base_vocab: list[str] = []
    if config.bpe_base_vocab_file:
        base_path = config.resolve_path(config.bpe_base_vocab_file)
        base_vocab = [
            line
            for line in base_path.read_text(encoding="utf-8").splitlines()
            if line
        ]
    for language in sorted(config.languages):
        records = read_sentence_store(_sentence_store(run_dir, language))
        merges = learn_bpe(records, config.bpe_num_merges, workers=config.bpe_workers)
        write_merges(out / f"{language}.merges.txt", merges)
        delta = expand_vocab(base_vocab, merges)
        write_json(
            out / f"{language}.vocab.json",
            {
                "schema": VOCAB_SCHEMA,
                "language": language,
                "base_size": len(delta.base_vocab),
                "new_subwords": list(delta.new_subwords),
            },
        )


def stage_plan(config: RunConfig, run_dir: Path) -> None:
    out = _stage_dir(run_dir, STAGE_PLAN)
    languages = [
        (code, spec.real_hours, spec.weight)
        for code, spec in sorted(config.languages.items())
    ]
    plans = plan_budgets(languages, config.plan_total_synth_hours, config.plan_policy)
    write_json(
        out / "plan.json",
        {"schema": PLAN_SCHEMA, "plans": [plan.to_dict() for plan in plans]},
    )


def _spawn_worker(command: str, store: Path, timeout_s: float) -> WorkerHandle:
    worker = WorkerHandle(
        command, env={"SPEECHBT_MOCK_STORE": str(store)}, timeout_s=timeout_s
    )
    handshake(worker)
    return worker


def _judge_pairs(
    worker: WorkerHandle, texts: list[str], language: str, seed: int, prompt_ref: str
) -> list[tuple[str, str]]:
    """Synthesize then transcribe ``texts`` through one worker; (ref, hyp) pairs."""
    caps = worker.capabilities
    assert caps is not None
    hyps: dict[str, str] = {}
    refs: dict[str, str] = {}
    chunk = caps.max_batch
    for start in range(0, len(texts), chunk):
        items = [
            {"id": start + i, "text": t}
            for i, t in enumerate(texts[start : start + chunk])
        ]
        synth = worker.request(
            "synthesize_batch",
            {"prompt_ref": prompt_ref, "language": language, "seed": seed, "items": items},
        )
        if synth.get("status") != "ok":
            raise ProtocolError(f"gate synthesis failed: {synth.get('error')}")
        for row in synth["results"]:
            refs[str(row["id"])] = row["audio_ref"]
        tr = worker.request(
            "transcribe_batch",
            {
                "language": language,
                "items": [
                    {"id": item["id"], "audio_ref": refs[str(item["id"])]}
                    for item in items
                ],
            },
        )
        if tr.get("status") != "ok":
            raise ProtocolError(f"gate transcription failed: {tr.get('error')}")
        for row in tr["results"]:
            hyps[str(row["id"])] = row["text"]
    return [(t, hyps[str(i)]) for i, t in enumerate(texts)]


def stage_gate(config: RunConfig, run_dir: Path) -> None:
    out = _stage_dir(run_dir, STAGE_GATE)
    pool, _ = read_prompt_pool(
        run_dir / STAGE_PREPARE_PROMPTS / "pool.jsonl",
        min_duration_s=0.0,
        max_duration_s=float("inf"),
    )
    if not pool:
        raise ConfigError("gate stage needs a non-empty retained prompt pool")
    real_command = config.workers_real_command or config.workers_command
    char_scored = frozenset(config.gate_char_scored)
    warnings = {}
    for language in sorted(config.languages):
        records = list(read_sentence_store(_sentence_store(run_dir, language)))
        texts = [r.text for r in records[: config.gate_eval_sentences]]
        if not texts:
            raise StageFailure(
                STAGE_GATE, EmptyReference(f"no sentences available for {language}")
            )
        prompt = next(prompt_cycle(pool, derive_seed(config.seed, "gate-prompt", language)))

        real_worker = _spawn_worker(
            real_command, out / f"audio-real-{language}", config.workers_timeout_s
        )
        try:
            real_pairs = _judge_pairs(
                real_worker, texts, language,
                derive_seed(config.seed, "gate", language, "real"), prompt.audio_ref,
            )
        finally:
            real_worker.close()
        synth_worker = _spawn_worker(
            config.workers_command, out / f"audio-synth-{language}", config.workers_timeout_s
        )
        try:
            judge_id = synth_worker.capabilities.engine_id  # type: ignore[union-attr]
            synth_pairs = _judge_pairs(
                synth_worker, texts, language,
                derive_seed(config.seed, "gate", language, "synth"), prompt.audio_ref,
            )
        finally:
            synth_worker.close()

        def rate(pairs):
            return corpus_error_rate(
                [
                    (normalize_text(ref, language, char_scored),
                     normalize_text(hyp, language, char_scored))
                    for ref, hyp in pairs
                ]
            )

        wer_real = rate(real_pairs)
        wer_synthetic = rate(synth_pairs)
        if wer_real == 0.0:
            warnings[language] = (
                f"real-channel WER is 0; substituting floor {config.gate_wer_floor}"
            )
            logger.warning("%s: %s", language, warnings[language])
            wer_real = config.gate_wer_floor
        report = report_from_rates(
            language,
            wer_real,
            wer_synthetic,
            threshold=config.gate_threshold,
            judge_id=judge_id,
            sample_count=len(synth_pairs),
        )
        (out / f"{language}.report.json").write_text(
            report.to_json() + "\n", encoding="utf-8"
        )
        if not report.accepted:
            logger.warning(
                "%s: checkpoint rejected (norm_i %.6f < %.6f); synthesis halted",
                language, report.norm_i, report.gate_threshold,
            )
    if warnings:
        write_json(out / "warnings.json", warnings)


def load_gate_reports(run_dir: Path) -> dict[str, IntelligibilityReport]:
    reports = {}
    for path in sorted((run_dir / STAGE_GATE).glob("*.report.json")):
        report = IntelligibilityReport.from_json(path.read_text(encoding="utf-8"))
        reports[report.language] = report
    return reports


def stage_synthesize(config: RunConfig, run_dir: Path) -> None:
    out = _stage_dir(run_dir, STAGE_SYNTHESIZE)
    plans = {
        p["language"]: p for p in read_json(run_dir / STAGE_PLAN / "plan.json")["plans"]
    }
    reports = load_gate_reports(run_dir)
    pool, _ = read_prompt_pool(
        run_dir / STAGE_PREPARE_PROMPTS / "pool.jsonl",
        min_duration_s=0.0,
        max_duration_s=float("inf"),
    )

    jobs = []
    job_meta = {}
    queue_rows = []
    shortfalls = {}
    for language in sorted(config.languages):
        report = reports.get(language)
        if report is None or not report.accepted:
            logger.info("%s: gate not passed; skipping synthesis", language)
            continue
        target_s = plans[language]["target_synth_hours"] * 3600.0
        selected = []
        estimate = 0.0
        for record in read_sentence_store(_sentence_store(run_dir, language)):
            if estimate >= target_s:
                break
            selected.append((record.id, record.text))
            estimate += record.char_count * config.synth_seconds_per_char_estimate
        if estimate < target_s:
            shortfalls[language] = {
                "target_hours": plans[language]["target_synth_hours"],
                "estimated_hours": estimate / 3600.0,
                "reason": "sentence supply exhausted",
            }
            logger.warning(
                "%s: sentence supply exhausted at %.3f of %.3f hours",
                language, estimate / 3600.0, plans[language]["target_synth_hours"],
            )
        batches = make_batches(
            selected,
            max_batch=config.batch_max_batch,
            max_spread=config.batch_max_spread,
            prompts=prompt_cycle(pool, derive_seed(config.seed, "prompts", language)),
            seed=derive_seed(config.seed, "batch", language),
            prompt_tokens_per_s=config.batch_prompt_tokens_per_s,
        )
        for index, batch in enumerate(batches):
            batch_id = f"{language}-{batch.batch_id}"
            queue_rows.append(
                dict(batch.to_dict(), batch_id=batch_id, language=language)
            )
            jobs.append(
                {
                    "batch_id": batch_id,
                    "language": language,
                    "prompt_ref": batch.prompt.audio_ref,
                    "prompt_id": batch.prompt.prompt_id,
                    "seed": batch.seed,
                    "items": [
                        {"id": it.sentence_id, "text": it.text} for it in batch.items
                    ],
                }
            )
            for position, item in enumerate(batch.items):
                job_meta[(batch_id, str(item.sentence_id))] = (language, index, position)
    write_jsonl(out / "batches.jsonl", queue_rows)

    rows = []
    if jobs:
        recorder = ResultRecorder(out / "results.jsonl")
        workers = []
        try:
            for _ in range(config.workers_count):
                workers.append(
                    _spawn_worker(
                        config.workers_command, out / "audio", config.workers_timeout_s
                    )
                )
            rows = dispatch(
                jobs, workers, recorder=recorder, max_attempts=config.workers_max_attempts
            )
        finally:
            recorder.close()
            for worker in workers:
                worker.close()

    rows.sort(key=lambda r: job_meta[(r["batch_id"], str(r["id"]))])
    entries = [
        {
            "schema": MANIFEST_SCHEMA,
            "utt_id": f"{row['batch_id']}-{row['id']:016x}",
            "language": row["language"],
            "text": row["text"],
            "audio_ref": row["audio_ref"],
            "duration_s": row["duration_s"],
            "prompt_id": row["prompt_id"],
            "batch_id": row["batch_id"],
            "engine_id": row["engine_id"],
            "seed": row["seed"],
            "gate_report_ref": f"{STAGE_GATE}/{row['language']}.report.json",
        }
        for row in rows
    ]
    write_jsonl(out / "manifest.jsonl", entries)
    if shortfalls:
        write_json(out / "shortfall.json", shortfalls)
    hours = {}
    for entry in entries:
        hours[entry["language"]] = hours.get(entry["language"], 0.0) + entry["duration_s"]
    write_json(
        out / "stats.json",
        {
            "entries": len(entries),
            "hours": {lang: seconds / 3600.0 for lang, seconds in sorted(hours.items())},
        },
    )


def read_manifest(run_dir: Path) -> list[dict]:
    path = run_dir / STAGE_SYNTHESIZE / "manifest.jsonl"
    return list(read_jsonl(path)) if path.is_file() else []


def stage_pack(config: RunConfig, run_dir: Path) -> None:
    out = _stage_dir(run_dir, STAGE_PACK)
    entries = read_manifest(run_dir)
    rows = []
    for language in sorted({e["language"] for e in entries}):
        clips = [
            (e["utt_id"], e["duration_s"]) for e in entries if e["language"] == language
        ]
        for segment in pack_segments(clips, budget_s=config.pack_budget_s):
            rows.append(
                {
                    "schema": SEGMENT_SCHEMA,
                    "language": language,
                    "segment_id": f"{language}-{segment.segment_id}",
                    "clip_ids": list(segment.clip_ids),
                    "total_duration_s": segment.total_duration_s,
                }
            )
    write_jsonl(out / "segments.jsonl", rows)


def stage_report(config: RunConfig, run_dir: Path) -> None:
    from .report import build_run_report

    build_run_report(run_dir)


STAGES = [
    (STAGE_PREPARE_TEXT, stage_prepare_text),
    (STAGE_PREPARE_PROMPTS, stage_prepare_prompts),
    (STAGE_EXPAND_VOCAB, stage_expand_vocab),
    (STAGE_PLAN, stage_plan),
    (STAGE_GATE, stage_gate),
    (STAGE_SYNTHESIZE, stage_synthesize),
    (STAGE_PACK, stage_pack),
    (STAGE_REPORT, stage_report),
]

STAGE_BY_COMMAND = {
    "prepare-text": STAGE_PREPARE_TEXT,
    "prepare-prompts": STAGE_PREPARE_PROMPTS,
    "expand-vocab": STAGE_EXPAND_VOCAB,
    "plan": STAGE_PLAN,
    "gate": STAGE_GATE,
    "synthesize": STAGE_SYNTHESIZE,
    "pack": STAGE_PACK,
    "report": STAGE_REPORT,
}


def _run_stage(stage: str, fn, config: RunConfig, run_dir: Path) -> None:
    marker = run_dir / stage / "DONE"
    if marker.exists():
        logger.info("%s: already complete, skipping", stage)
        return
    logger.info("%s: running", stage)
    try:
        fn(config, run_dir)
    except BaseException as exc:
        write_json(
            run_dir / "error.json",
            {"stage": stage, "type": type(exc).__name__, "message": str(exc)},
        )
        if isinstance(exc, StageFailure):
            raise
        raise StageFailure(stage, exc) from exc
    marker.write_text("")


def run_status(run_dir: Path) -> str:
    """ok when at least one language passed the gate, gated when none did."""
    reports = load_gate_reports(run_dir)
    if reports and not any(r.accepted for r in reports.values()):
        return "gated"
    return "ok"


def run_pipeline(config: RunConfig, run_dir: str | Path) -> str:
    """Execute all stages in order; returns "ok" or "gated"."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    with RunLock(run_dir):
        store_config(config, run_dir)
        for stage, fn in STAGES:
            _run_stage(stage, fn, config, run_dir)
    return run_status(run_dir)


def run_single_stage(command: str, config: RunConfig, run_dir: str | Path) -> str:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    stage = STAGE_BY_COMMAND[command]
    fn = dict(STAGES)[stage]
    with RunLock(run_dir):
        store_config(config, run_dir)
        _run_stage(stage, fn, config, run_dir)
    return run_status(run_dir) if command in ("gate", "synthesize", "report") else "ok"
