"""Run configuration: an INI file of sections and knobs, schema-validated.

Environment variables override scalar keys via the SPEECHBT_ prefix, e.g.
SPEECHBT_GATE_THRESHOLD=0.02 overrides [gate] threshold. The resolved config
is serialized into every run directory so a run is reproducible from its
stored config plus inputs.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .jsonio import read_json, write_json

ENV_PREFIX = "SPEECHBT_"


@dataclass(frozen=True)
class LanguageInput:
    text_files: tuple[str, ...]
    source: str = "other"
    real_hours: float = 0.0
    weight: float = 1.0


@dataclass(frozen=True)
class FilterConfig:
    min_chars: int = 8
    max_chars: int = 400
    min_alpha_ratio: float = 0.5


@dataclass
class RunConfig:
    seed: int = 1234
    languages: dict[str, LanguageInput] = field(default_factory=dict)

    filter_default: FilterConfig = field(default_factory=FilterConfig)
    filter_overrides: dict[str, FilterConfig] = field(default_factory=dict)
    dedup_max_ids_in_memory: int = 0  # 0 means unlimited (stay in memory)

    bpe_num_merges: int = 200
    bpe_workers: int = 1
    bpe_base_vocab_file: str = ""

    prompts_pool_file: str = ""
    prompts_dedup_threshold: float = 0.8
    prompts_min_duration_s: float = 3.0
    prompts_max_duration_s: float = 15.0

    plan_total_synth_hours: float = 1.0
    plan_policy: str = "uniform"

    batch_max_batch: int = 16
    batch_max_spread: int = 20
    batch_prompt_tokens_per_s: float = 25.0

    gate_threshold: float = 0.01
    gate_eval_sentences: int = 20
    gate_wer_floor: float = 0.001
    gate_char_scored: tuple[str, ...] = ("zh",)

    workers_command: str = "speechbt-mock-worker"
    workers_real_command: str = ""  # empty: reuse workers_command
    workers_count: int = 1
    workers_max_attempts: int = 3
    workers_timeout_s: float = 60.0

    synth_seconds_per_char_estimate: float = 0.08

    pack_budget_s: float = 30.0

    base_dir: Path = field(default_factory=Path)

    def filter_for(self, language: str) -> FilterConfig:
        return self.filter_overrides.get(language, self.filter_default)

    def resolve_path(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    def to_dict(self) -> dict:
        return {
            "run": {"seed": self.seed},
            "languages": {
                code: {
                    "text": list(li.text_files),
                    "source": li.source,
                    "real_hours": li.real_hours,
                    "weight": li.weight,
                }
                for code, li in self.languages.items()
            },
            "filter": {
                "min_chars": self.filter_default.min_chars,
                "max_chars": self.filter_default.max_chars,
                "min_alpha_ratio": self.filter_default.min_alpha_ratio,
            },
            "filter_overrides": {
                code: {
                    "min_chars": fc.min_chars,
                    "max_chars": fc.max_chars,
                    "min_alpha_ratio": fc.min_alpha_ratio,
                }
                for code, fc in self.filter_overrides.items()
            },
            "dedup": {"max_ids_in_memory": self.dedup_max_ids_in_memory},
            "bpe": {
                "num_merges": self.bpe_num_merges,
                "workers": self.bpe_workers,
                "base_vocab_file": self.bpe_base_vocab_file,
            },
            "prompts": {
                "pool_file": self.prompts_pool_file,
                "dedup_threshold": self.prompts_dedup_threshold,
                "min_duration_s": self.prompts_min_duration_s,
                "max_duration_s": self.prompts_max_duration_s,
            },
            "plan": {
                "total_synth_hours": self.plan_total_synth_hours,
                "policy": self.plan_policy,
            },
            "batch": {
                "max_batch": self.batch_max_batch,
                "max_spread": self.batch_max_spread,
                "prompt_tokens_per_s": self.batch_prompt_tokens_per_s,
            },
            "gate": {
                "threshold": self.gate_threshold,
                "eval_sentences": self.gate_eval_sentences,
                "wer_floor": self.gate_wer_floor,
                "char_scored": list(self.gate_char_scored),
            },
            "workers": {
                "command": self.workers_command,
                "real_command": self.workers_real_command,
                "count": self.workers_count,
                "max_attempts": self.workers_max_attempts,
                "timeout_s": self.workers_timeout_s,
            },
            "synth": {"seconds_per_char_estimate": self.synth_seconds_per_char_estimate},
            "pack": {"budget_s": self.pack_budget_s},
            "base_dir": str(self.base_dir),
        }

    def validate(self) -> None:
        problems = []
        if not self.languages:
            problems.append("at least one [language.<code>] section is required")
        for code, li in self.languages.items():
            if not li.text_files:
                problems.append(f"language {code}: no text files listed")
            if li.real_hours < 0 or li.weight < 0:
                problems.append(f"language {code}: real_hours and weight must be >= 0")
        fc = self.filter_default
        if not (0 < fc.min_chars <= fc.max_chars):
            problems.append("filter: need 0 < min_chars <= max_chars")
        if not 0.0 <= fc.min_alpha_ratio <= 1.0:
            problems.append("filter: min_alpha_ratio must be in [0, 1]")
        if self.bpe_num_merges < 0:
            problems.append("bpe: num_merges must be >= 0")
        if self.bpe_workers < 1:
            problems.append("bpe: workers must be >= 1")
        if not 0.0 < self.prompts_dedup_threshold <= 1.0:
            problems.append("prompts: dedup_threshold must be in (0, 1]")
        if self.plan_total_synth_hours <= 0:
            problems.append("plan: total_synth_hours must be positive")
        if self.plan_policy not in ("uniform", "weighted"):
            problems.append(f"plan: unknown policy {self.plan_policy!r}")
        if self.batch_max_batch < 1:
            problems.append("batch: max_batch must be >= 1")
        if self.batch_max_spread < 0:
            problems.append("batch: max_spread must be >= 0")
        if self.gate_threshold <= 0:
            problems.append("gate: threshold must be positive")
        if self.gate_eval_sentences < 1:
            problems.append("gate: eval_sentences must be >= 1")
        if self.gate_wer_floor <= 0:
            problems.append("gate: wer_floor must be positive")
        if not self.workers_command.strip():
            problems.append("workers: command must not be empty")
        if self.workers_count < 1:
            problems.append("workers: count must be >= 1")
        if self.workers_max_attempts < 1:
            problems.append("workers: max_attempts must be >= 1")
        if self.synth_seconds_per_char_estimate <= 0:
            problems.append("synth: seconds_per_char_estimate must be positive")
        if self.pack_budget_s <= 0:
            problems.append("pack: budget_s must be positive")
        if problems:
            raise ConfigError("; ".join(problems))


def _split_list(raw: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def _apply_env_overrides(parser: configparser.ConfigParser, env: dict[str, str]) -> None:
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        section, _, key = rest.partition("_")
        if not section or not key:
            continue
        section = section.lower()
        key = key.lower()
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def load_config(path: str | Path, env: dict[str, str] | None = None) -> RunConfig:
    """Load and validate a config file (INI, or a previously stored JSON)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        return config_from_dict(read_json(path))

    # no interpolation: worker command lines may contain % characters
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(path.read_text(encoding="utf-8"))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    _apply_env_overrides(parser, env if env is not None else dict(os.environ))

    languages = {}
    filter_overrides = {}
    for section in parser.sections():
        if section.startswith("language."):
            code = section[len("language."):]
            languages[code] = LanguageInput(
                text_files=_split_list(parser.get(section, "text", fallback="")),
                source=parser.get(section, "source", fallback="other"),
                real_hours=_get(parser, section, "real_hours", float, 0.0),
                weight=_get(parser, section, "weight", float, 1.0),
            )
        elif section.startswith("filter."):
            code = section[len("filter."):]
            base = FilterConfig()
            filter_overrides[code] = FilterConfig(
                min_chars=_get(parser, section, "min_chars", int, base.min_chars),
                max_chars=_get(parser, section, "max_chars", int, base.max_chars),
                min_alpha_ratio=_get(
                    parser, section, "min_alpha_ratio", float, base.min_alpha_ratio
                ),
            )

    defaults = RunConfig()
    config = RunConfig(
        seed=_get(parser, "run", "seed", int, defaults.seed),
        languages=languages,
        filter_default=FilterConfig(
            min_chars=_get(parser, "filter", "min_chars", int, 8),
            max_chars=_get(parser, "filter", "max_chars", int, 400),
            min_alpha_ratio=_get(parser, "filter", "min_alpha_ratio", float, 0.5),
        ),
        filter_overrides=filter_overrides,
        dedup_max_ids_in_memory=_get(parser, "dedup", "max_ids_in_memory", int, 0),
        bpe_num_merges=_get(parser, "bpe", "num_merges", int, defaults.bpe_num_merges),
        bpe_workers=_get(parser, "bpe", "workers", int, defaults.bpe_workers),
        bpe_base_vocab_file=parser.get("bpe", "base_vocab_file", fallback=""),
        prompts_pool_file=parser.get("prompts", "pool_file", fallback=""),
        prompts_dedup_threshold=_get(
            parser, "prompts", "dedup_threshold", float, defaults.prompts_dedup_threshold
        ),
        prompts_min_duration_s=_get(
            parser, "prompts", "min_duration_s", float, defaults.prompts_min_duration_s
        ),
        prompts_max_duration_s=_get(
            parser, "prompts", "max_duration_s", float, defaults.prompts_max_duration_s
        ),
        plan_total_synth_hours=_get(
            parser, "plan", "total_synth_hours", float, defaults.plan_total_synth_hours
        ),
        plan_policy=parser.get("plan", "policy", fallback=defaults.plan_policy),
        batch_max_batch=_get(parser, "batch", "max_batch", int, defaults.batch_max_batch),
        batch_max_spread=_get(parser, "batch", "max_spread", int, defaults.batch_max_spread),
        batch_prompt_tokens_per_s=_get(
            parser, "batch", "prompt_tokens_per_s", float, defaults.batch_prompt_tokens_per_s
        ),
        gate_threshold=_get(parser, "gate", "threshold", float, defaults.gate_threshold),
        gate_eval_sentences=_get(
            parser, "gate", "eval_sentences", int, defaults.gate_eval_sentences
        ),
        gate_wer_floor=_get(parser, "gate", "wer_floor", float, defaults.gate_wer_floor),
        gate_char_scored=_split_list(parser.get("gate", "char_scored", fallback="zh")),
        workers_command=parser.get("workers", "command", fallback=defaults.workers_command),
        workers_real_command=parser.get("workers", "real_command", fallback=""),
        workers_count=_get(parser, "workers", "count", int, defaults.workers_count),
        workers_max_attempts=_get(
            parser, "workers", "max_attempts", int, defaults.workers_max_attempts
        ),
        workers_timeout_s=_get(
            parser, "workers", "timeout_s", float, defaults.workers_timeout_s
        ),
        synth_seconds_per_char_estimate=_get(
            parser, "synth", "seconds_per_char_estimate", float,
            defaults.synth_seconds_per_char_estimate,
        ),
        pack_budget_s=_get(parser, "pack", "budget_s", float, defaults.pack_budget_s),
        base_dir=path.resolve().parent,
    )
    config.validate()
    return config


def config_from_dict(payload: dict) -> RunConfig:
    config = RunConfig(
        seed=payload["run"]["seed"],
        languages={
            code: LanguageInput(
                text_files=tuple(entry["text"]),
                source=entry["source"],
                real_hours=entry["real_hours"],
                weight=entry["weight"],
            )
            for code, entry in payload["languages"].items()
        },
        filter_default=FilterConfig(**payload["filter"]),
        filter_overrides={
            code: FilterConfig(**entry)
            for code, entry in payload.get("filter_overrides", {}).items()
        },
        dedup_max_ids_in_memory=payload["dedup"]["max_ids_in_memory"],
        bpe_num_merges=payload["bpe"]["num_merges"],
        bpe_workers=payload["bpe"]["workers"],
        bpe_base_vocab_file=payload["bpe"].get("base_vocab_file", ""),
        prompts_pool_file=payload["prompts"]["pool_file"],
        prompts_dedup_threshold=payload["prompts"]["dedup_threshold"],
        prompts_min_duration_s=payload["prompts"]["min_duration_s"],
        prompts_max_duration_s=payload["prompts"]["max_duration_s"],
        plan_total_synth_hours=payload["plan"]["total_synth_hours"],
        plan_policy=payload["plan"]["policy"],
        batch_max_batch=payload["batch"]["max_batch"],
        batch_max_spread=payload["batch"]["max_spread"],
        batch_prompt_tokens_per_s=payload["batch"]["prompt_tokens_per_s"],
        gate_threshold=payload["gate"]["threshold"],
        gate_eval_sentences=payload["gate"]["eval_sentences"],
        gate_wer_floor=payload["gate"]["wer_floor"],
        gate_char_scored=tuple(payload["gate"]["char_scored"]),
        workers_command=payload["workers"]["command"],
        workers_real_command=payload["workers"]["real_command"],
        workers_count=payload["workers"]["count"],
        workers_max_attempts=payload["workers"]["max_attempts"],
        workers_timeout_s=payload["workers"]["timeout_s"],
        synth_seconds_per_char_estimate=payload["synth"]["seconds_per_char_estimate"],
        pack_budget_s=payload["pack"]["budget_s"],
        base_dir=Path(payload["base_dir"]),
    )
    config.validate()
    return config


def store_config(config: RunConfig, run_dir: str | Path) -> Path:
    path = Path(run_dir) / "config.resolved.json"
    write_json(path, config.to_dict())
    return path
