from __future__ import annotations

import csv
from pathlib import Path

import pytest

from speechbt.config import load_config
from speechbt.errors import MissingRunData
from speechbt.jsonio import read_jsonl
from speechbt.pipeline import run_pipeline
from speechbt.report import (
    build_run_report,
    write_hours_report,
    write_scatter_report,
)
from speechbt.scheduler import load_reference_hours


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_fixture_import_matches_exactly(tmp_path):
    write_hours_report(tmp_path, load_reference_hours())
    rows = read_csv(tmp_path / "hours.csv")
    per_language = {r["language"]: r for r in rows if r["language"] != "TOTAL"}
    assert per_language["cs"]["real_hours"] == "119"
    assert per_language["cs"]["synth_hours"] == "33312"
    assert len(per_language) == 10
    total = next(r for r in rows if r["language"] == "TOTAL")
    assert total["real_hours"] == "14864"
    assert total["synth_hours"] == "505830"
    svg = (tmp_path / "hours.svg").read_text()
    assert svg.count("<rect") == 11  # background + one bar per language
    assert "vi" in svg


def test_fixture_import_deterministic(tmp_path):
    table = load_reference_hours()
    write_hours_report(tmp_path / "a", table)
    write_hours_report(tmp_path / "b", table)
    assert (tmp_path / "a" / "hours.svg").read_bytes() == (
        tmp_path / "b" / "hours.svg"
    ).read_bytes()
    assert (tmp_path / "a" / "hours.csv").read_bytes() == (
        tmp_path / "b" / "hours.csv"
    ).read_bytes()


def test_scatter_report_has_threshold_rule(tmp_path):
    source = tmp_path / "points.csv"
    source.write_text(
        "norm_i,delta_wer\n0.001,1.5\n0.02,-0.5\n0.5,-2.0\n1.0,-3.1\n",
        encoding="utf-8",
    )
    write_scatter_report(tmp_path / "out", source, threshold=0.01)
    svg = (tmp_path / "out" / "quality_scatter.svg").read_text()
    assert 'class="threshold-rule"' in svg
    assert svg.count("<circle") == 4
    quality = read_csv(tmp_path / "out" / "quality.csv")
    assert [row["norm_i"] for row in quality] == ["0.001", "0.02", "0.5", "1.0"]


def test_missing_run_data(tmp_path):
    with pytest.raises(MissingRunData):
        build_run_report(tmp_path / "not-a-run")


def test_empty_run_emits_headers_only(tmp_path):
    run_dir = tmp_path / "run"
    (run_dir / "06-synthesize").mkdir(parents=True)
    (run_dir / "06-synthesize" / "manifest.jsonl").write_text("")
    out = build_run_report(run_dir)
    hours = (out / "hours.csv").read_text().splitlines()
    gates = (out / "gates.csv").read_text().splitlines()
    assert hours == ["language,entries,synth_hours,planned_hours"]
    assert gates[0].startswith("language,wer_real,wer_synthetic,norm_i")
    assert len(gates) == 1


def test_run_report_accounts_for_manifest(tmp_path, workspace):
    run_dir = tmp_path / "run"
    run_pipeline(load_config(workspace), run_dir)
    entries = list(read_jsonl(run_dir / "06-synthesize" / "manifest.jsonl"))
    rows = read_csv(run_dir / "08-report" / "hours.csv")
    for row in rows:
        if row["language"] == "TOTAL":
            continue
        language = row["language"]
        expected = sum(
            e["duration_s"] for e in entries if e["language"] == language
        ) / 3600.0
        assert float(row["synth_hours"]) == expected
        assert int(row["entries"]) == sum(
            1 for e in entries if e["language"] == language
        )
    gates = read_csv(run_dir / "08-report" / "gates.csv")
    assert {g["language"] for g in gates} == {"en", "de"}
    assert all(g["accepted"] == "True" for g in gates)
