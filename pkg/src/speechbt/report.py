"""Run reporting: per-language hour tables, gate tables, and static SVG charts.

SVG is emitted directly (no plotting dependency) so identical inputs give
byte-identical charts.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .errors import MissingRunData
from .jsonio import read_json
from .scheduler import HoursTable, load_hours_table


def _svg_header(width: int, height: int) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
    )


def render_bar_chart_svg(
    path: str | Path, labels: list[str], values: list[float], title: str
) -> None:
    width, height = 640, 400
    margin, axis = 40, 60
    plot_w, plot_h = width - axis - margin, height - axis - margin
    top = max(values) if values else 1.0
    top = top if top > 0 else 1.0
    parts = [_svg_header(width, height)]
    parts.append(
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>\n'
    )
    parts.append(
        f'<line x1="{axis}" y1="{margin}" x2="{axis}" y2="{margin + plot_h}" stroke="black"/>\n'
        f'<line x1="{axis}" y1="{margin + plot_h}" x2="{axis + plot_w}" '
        f'y2="{margin + plot_h}" stroke="black"/>\n'
    )
    n = max(len(values), 1)
    slot = plot_w / n
    bar_w = slot * 0.7
    for i, (label, value) in enumerate(zip(labels, values)):
        bar_h = plot_h * (value / top)
        x = axis + i * slot + (slot - bar_w) / 2
        y = margin + plot_h - bar_h
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{bar_h:.2f}" '
            f'fill="#4878a8"/>\n'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{margin + plot_h + 16}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="11">{label}</text>\n'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{y - 4:.2f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{value:g}</text>\n'
        )
    parts.append("</svg>\n")
    Path(path).write_text("".join(parts), encoding="utf-8")


def render_scatter_svg(
    path: str | Path,
    points: list[tuple[float, float]],
    rule_x: float,
    title: str,
    x_label: str = "normalized intelligibility",
    y_label: str = "delta WER",
) -> None:
    width, height = 640, 400
    margin, axis = 40, 60
    plot_w, plot_h = width - axis - margin, height - axis - margin
    xs = [p[0] for p in points] + [rule_x]
    ys = [p[1] for p in points] or [0.0]
    x_min, x_max = min(xs + [0.0]), max(xs)
    y_min, y_max = min(ys + [0.0]), max(ys)
    x_span = (x_max - x_min) or 1.0
    y_span = (y_max - y_min) or 1.0

    def sx(x: float) -> float:
        return axis + plot_w * (x - x_min) / x_span

    def sy(y: float) -> float:
        return margin + plot_h * (1 - (y - y_min) / y_span)

    parts = [_svg_header(width, height)]
    parts.append(
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>\n'
    )
    parts.append(
        f'<line x1="{axis}" y1="{margin}" x2="{axis}" y2="{margin + plot_h}" stroke="black"/>\n'
        f'<line x1="{axis}" y1="{margin + plot_h}" x2="{axis + plot_w}" '
        f'y2="{margin + plot_h}" stroke="black"/>\n'
    )
    parts.append(
        f'<line x1="{sx(rule_x):.2f}" y1="{margin}" x2="{sx(rule_x):.2f}" '
        f'y2="{margin + plot_h}" stroke="#b03030" stroke-dasharray="6,4" class="threshold-rule"/>\n'
    )
    parts.append(
        f'<text x="{sx(rule_x) + 4:.2f}" y="{margin + 12}" font-family="sans-serif" '
        f'font-size="10" fill="#b03030">threshold {rule_x:g}</text>\n'
    )
    for x, y in points:
        parts.append(
            f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3.5" fill="#4878a8" '
            f'fill-opacity="0.8"/>\n'
        )
    parts.append(
        f'<text x="{axis + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{x_label}</text>\n'
    )
    parts.append(
        f'<text x="14" y="{margin + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {margin + plot_h / 2:.1f})">{y_label}</text>\n'
    )
    parts.append("</svg>\n")
    Path(path).write_text("".join(parts), encoding="utf-8")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_hours_report(out_dir: str | Path, table: HoursTable) -> None:
    """Emit an imported hours table as CSV plus a synthetic-hours bar chart."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        [row["language"], row["real_hours"], row["synth_hours"]] for row in table.rows
    ]
    if rows:
        rows.append(["TOTAL", table.total_real_hours, table.total_synth_hours])
    _write_csv(out / "hours.csv", ["language", "real_hours", "synth_hours"], rows)
    render_bar_chart_svg(
        out / "hours.svg",
        [row["language"] for row in table.rows],
        [float(row["synth_hours"]) for row in table.rows],
        "synthetic hours per language",
    )


def write_scatter_report(out_dir: str | Path, csv_path: str | Path, threshold: float) -> None:
    """Quality scatter from a user CSV with norm_i, delta_wer columns."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = []
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            points.append((float(row["norm_i"]), float(row["delta_wer"])))
    _write_csv(
        out / "quality.csv",
        ["norm_i", "delta_wer"],
        [[x, y] for x, y in points],
    )
    render_scatter_svg(
        out / "quality_scatter.svg",
        points,
        rule_x=threshold,
        title="intelligibility vs ASR improvement",
    )


def build_run_report(run_dir: str | Path) -> Path:
    """CSV tables and charts for one run directory; returns the report dir."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "06-synthesize" / "manifest.jsonl"
    gate_dir = run_dir / "05-gate"
    if not manifest_path.is_file() and not gate_dir.is_dir():
        raise MissingRunData(f"{run_dir} has no manifests to report on")
    out = run_dir / "08-report"
    out.mkdir(parents=True, exist_ok=True)

    import json

    entries = []
    if manifest_path.is_file():
        with open(manifest_path, "r", encoding="utf-8") as fh:
            entries = [json.loads(line) for line in fh if line.strip()]

    planned = {}
    plan_path = run_dir / "04-plan" / "plan.json"
    if plan_path.is_file():
        planned = {
            p["language"]: p["target_synth_hours"]
            for p in read_json(plan_path)["plans"]
        }

    seconds: dict[str, float] = {}
    counts: dict[str, int] = {}
    for entry in entries:
        language = entry["language"]
        seconds[language] = seconds.get(language, 0.0) + entry["duration_s"]
        counts[language] = counts.get(language, 0) + 1
    languages = sorted(seconds)
    rows = [
        [lang, counts[lang], seconds[lang] / 3600.0, planned.get(lang, "")]
        for lang in languages
    ]
    if rows:
        rows.append(
            ["TOTAL", sum(counts.values()), sum(seconds.values()) / 3600.0, ""]
        )
    _write_csv(
        out / "hours.csv", ["language", "entries", "synth_hours", "planned_hours"], rows
    )
    render_bar_chart_svg(
        out / "hours.svg",
        languages,
        [seconds[lang] / 3600.0 for lang in languages],
        "synthesized hours per language",
    )

    gate_rows = []
    if gate_dir.is_dir():
        for path in sorted(gate_dir.glob("*.report.json")):
            payload = json.loads(path.read_text(encoding="utf-8"))
            gate_rows.append(
                [
                    payload["language"],
                    payload["wer_real"],
                    payload["wer_synthetic"],
                    payload["norm_i"],
                    payload["gate_threshold"],
                    payload["accepted"],
                    payload["judge_id"],
                    payload["sample_count"],
                ]
            )
    _write_csv(
        out / "gates.csv",
        [
            "language",
            "wer_real",
            "wer_synthetic",
            "norm_i",
            "gate_threshold",
            "accepted",
            "judge_id",
            "sample_count",
        ],
        gate_rows,
    )
    return out


def load_fixture_or_file(path: str | Path | None) -> HoursTable:
    if path is None:
        from .scheduler import load_reference_hours

        return load_reference_hours()
    return load_hours_table(path)
