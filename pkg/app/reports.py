"""
Report Generator

Creates:
- Per-trial transcript, rubric and state files
- Summary CSV and JSON per experiment run
- Condition comparison reports (Markdown) with Welch/F statistics
- Knowledge-growth and code-metrics tables
"""

import csv
import io
import json
import logging
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .assembler import estimate_tokens
from .errors import MalformedDocument
from .metrics import MetricsReport
from .models import Dimension, GraphDocument, Track, TrialRecord
from .stats import describe, trial_stats

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["trial", "condition"] + [d.value for d in Dimension] + ["cumulative"]


def _trial_name(trial: int) -> str:
    return f"trial-{trial:02d}.json"


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "n/a" if value is None else f"{value:.{digits}f}"


class ReportGenerator:
    """
    Writes experiment results into one output directory.

    Layout:
        transcripts/trial-NN.json
        rubrics/trial-NN.json
        states/trial-NN.json
        summary.csv, summary.json
    """

    def __init__(self, output_dir: str = "results"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    # -------------------------------------------------------------------------
    # Trial Files
    # -------------------------------------------------------------------------

    def save_json(self, data, relative: str) -> str:
        path = self.output_dir / relative
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2)
            f.write("\n")
        return str(path)

    def save_text(self, content: str, relative: str) -> str:
        path = self.output_dir / relative
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(content)
        return str(path)

    def write_trials(
        self,
        records: Sequence[TrialRecord],
        include_wall_time: bool = False,
    ) -> Dict[str, List[str]]:
        """Write one transcript, rubric and state file per trial."""
        saved = {"transcripts": [], "rubrics": [], "states": []}
        for record in records:
            name = _trial_name(record.trial)
            transcript = record.transcript.to_dict(include_wall_time)
            transcript.update({"trial": record.trial, "failed": record.failed, "error": record.error})
            saved["transcripts"].append(self.save_json(transcript, f"transcripts/{name}"))

            rubric = {"trial": record.trial, "condition": record.condition.value, "failed": record.failed}
            if record.rubric is not None:
                rubric.update(record.rubric.to_dict())
            saved["rubrics"].append(self.save_json(rubric, f"rubrics/{name}"))

            if record.final_state is not None:
                saved["states"].append(self.save_json(record.final_state.to_dict(), f"states/{name}"))
        logger.info(f"Wrote {len(records)} trial(s) to {self.output_dir}")
        return saved

    def write_prompts(self, records: Sequence[TrialRecord], directory=None) -> List[str]:
        """System prompts as <directory>/trial-NN/step-K.md; steps without one are skipped."""
        directory = Path(directory) if directory else self.output_dir / "prompts"
        saved = []
        for record in records:
            for step in record.transcript.steps:
                if step.system_prompt is None:
                    continue
                path = directory / f"trial-{record.trial:02d}" / f"step-{step.step}.md"
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(step.system_prompt, encoding="utf-8")
                saved.append(str(path))
        return saved

    def write_summary(self, records: Sequence[TrialRecord]) -> Dict[str, str]:
        rows = summary_rows(records)
        csv_path = self.save_text(format_csv(rows), "summary.csv")
        json_path = self.save_json(summarize(rows, records), "summary.json")
        return {"csv": csv_path, "json": json_path}


# -----------------------------------------------------------------------------
# Summaries
# -----------------------------------------------------------------------------

def summary_rows(records: Sequence[TrialRecord]) -> List[dict]:
    """One row per trial: trial, condition, E1..E6, cumulative (None for failed trials)."""
    rows = []
    for record in records:
        row = {"trial": record.trial, "condition": record.condition.value}
        for dimension in Dimension:
            score = record.rubric.score_for(dimension) if record.rubric else None
            row[dimension.value] = score.aggregated if score else None
        row["cumulative"] = record.rubric.cumulative if record.rubric else None
        rows.append(row)
    return rows


def format_csv(rows: Sequence[dict]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row[k]) for k in SUMMARY_COLUMNS})
    return buffer.getvalue()


def _mean_prompt_tokens(records: Sequence[TrialRecord], condition: str) -> float:
    sizes = [
        estimate_tokens(step.system_prompt)
        for record in records if record.condition.value == condition
        for step in record.transcript.steps if step.system_prompt is not None
    ]
    return sum(sizes) / len(sizes) if sizes else 0.0


def summarize(rows: Sequence[dict], records: Optional[Sequence[TrialRecord]] = None) -> dict:
    """Per-condition trial counts, means and sample standard deviations."""
    conditions: Dict[str, dict] = {}
    for condition in sorted({row["condition"] for row in rows}):
        group = [row for row in rows if row["condition"] == condition]
        scored = [row for row in group if row["cumulative"] is not None]
        entry = {"trials": len(group), "failed": len(group) - len(scored), "mean": {}, "sample_std": {}}
        for column in SUMMARY_COLUMNS[2:]:
            if scored:
                mean, std = describe([row[column] for row in scored])
                entry["mean"][column] = mean
                entry["sample_std"][column] = std
        if records is not None:
            entry["mean_prompt_tokens"] = _mean_prompt_tokens(records, condition)
        conditions[condition] = entry
    return {"conditions": conditions}


def load_rows(results_dir) -> List[dict]:
    """
    Read summary rows back from rubric files under results_dir.

    Accepts a single run directory or a directory of run directories.
    """
    results_dir = Path(results_dir)
    files = sorted(results_dir.glob("rubrics/*.json")) + sorted(results_dir.glob("*/rubrics/*.json"))
    if not files:
        raise MalformedDocument(results_dir, "no rubric files found")
    rows = []
    for path in files:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, ValueError) as e:
            raise MalformedDocument(path, str(e))
        row = {"trial": data.get("trial"), "condition": data.get("condition", "")}
        by_dimension = {s["dimension"]: s["aggregated"] for s in data.get("scores", [])}
        for dimension in Dimension:
            row[dimension.value] = by_dimension.get(dimension.value)
        row["cumulative"] = None if data.get("failed") else data.get("cumulative")
        rows.append(row)
    return rows


def compare_conditions(rows: Sequence[dict]) -> List[dict]:
    """Welch and F results on cumulative scores for every pair of conditions."""
    by_condition: Dict[str, List[float]] = {}
    for row in rows:
        if row["cumulative"] is not None:
            by_condition.setdefault(row["condition"], []).append(row["cumulative"])

    comparisons = []
    for a, b in combinations(sorted(by_condition), 2):
        if len(by_condition[a]) < 2 or len(by_condition[b]) < 2:
            continue
        # variance reduction is tested for the later condition against the earlier
        result = trial_stats(by_condition[b], by_condition[a])
        comparisons.append({"a": b, "b": a, **result.to_dict()})
    return comparisons


def markdown_report(rows: Sequence[dict], title: str = "Experiment Report") -> str:
    summary = summarize(rows)
    lines = [f"# {title}", ""]

    lines.extend([
        "## Scores by Condition",
        "",
        "| Condition | Trials | " + " | ".join(SUMMARY_COLUMNS[2:]) + " |",
        "|-----------|--------|" + "|".join(["------"] * (len(SUMMARY_COLUMNS) - 2)) + "|",
    ])
    for condition, entry in summary["conditions"].items():
        cells = []
        for column in SUMMARY_COLUMNS[2:]:
            mean = entry["mean"].get(column)
            std = entry["sample_std"].get(column)
            cells.append(f"{_fmt(mean, 2)} ± {_fmt(std, 2)}" if mean is not None else "n/a")
        lines.append(f"| {condition} | {entry['trials']} | " + " | ".join(cells) + " |")
    lines.append("")

    comparisons = compare_conditions(rows)
    if comparisons:
        lines.extend([
            "## Cumulative Score Comparisons",
            "",
            "| A vs B | t | df | p (two-sided) | F | p (variance reduction) |",
            "|--------|---|----|---------------|---|------------------------|",
        ])
        for c in comparisons:
            welch, f_test = c["welch"], c["f_test"]
            F = f_test["F"]
            f_cell = _fmt(F, 3) if isinstance(F, (int, float)) else (F or "undefined")
            if welch["degenerate"]:
                lines.append(f"| {c['a']} vs {c['b']} | undefined | | | | |")
                continue
            lines.append(
                f"| {c['a']} vs {c['b']} | {_fmt(welch['t'], 3)} | {_fmt(welch['df'], 2)} | {_fmt(welch['p'], 3)} "
                f"| {f_cell} | {_fmt(f_test['p'], 3)} |"
            )
        lines.append("")
    return "\n".join(lines)


# -----------------------------------------------------------------------------
# Knowledge Growth
# -----------------------------------------------------------------------------

def growth_table(initial: Sequence[GraphDocument], final: Sequence[GraphDocument]) -> List[dict]:
    """Initial and final node counts with growth % per track, plus a total row."""
    def counts(graphs):
        return {g.track: len(g.nodes) for g in graphs}

    before, after = counts(initial), counts(final)
    rows = []
    for track in Track:
        if track not in before and track not in after:
            continue
        b, a = before.get(track, 0), after.get(track, 0)
        rows.append({"track": track.value, "initial": b, "final": a, "growth_pct": (a - b) * 100 / b if b else 0.0})
    total_b = sum(r["initial"] for r in rows)
    total_a = sum(r["final"] for r in rows)
    rows.append({
        "track": "total",
        "initial": total_b,
        "final": total_a,
        "growth_pct": (total_a - total_b) * 100 / total_b if total_b else 0.0,
    })
    return rows


def format_growth_table(rows: Sequence[dict]) -> str:
    lines = [
        "| Track | Initial Nodes | Final Nodes | Growth |",
        "|-------|---------------|-------------|--------|",
    ]
    for row in rows:
        lines.append(f"| {row['track']} | {row['initial']} | {row['final']} | {row['growth_pct']:+.1f}% |")
    return "\n".join(lines)


# -----------------------------------------------------------------------------
# Code Metrics
# -----------------------------------------------------------------------------

METRIC_ROWS = [
    ("Logical SLOC", lambda r: r.lloc),
    ("Cyclomatic Complexity", lambda r: r.cyclomatic),
    ("Maintainability Index", lambda r: round(r.maintainability_index, 2)),
    ("Lint Warnings", lambda r: len(r.warnings)),
    ("Halstead Volume", lambda r: round(r.halstead_volume, 2)),
]


def metrics_table(reports: Sequence[MetricsReport]) -> str:
    """One column per file; with two or more files, a change column (last vs first)."""
    headers = ["Metric"] + [r.path or f"file {i + 1}" for i, r in enumerate(reports)]
    with_change = len(reports) >= 2
    if with_change:
        headers.append("change")
    lines = [
        "| " + " | ".join(headers) + " |",
        "|" + "|".join(["---"] * len(headers)) + "|",
    ]
    for label, value in METRIC_ROWS:
        values = [value(r) for r in reports]
        cells = [label] + [str(v) for v in values]
        if with_change:
            first, last = values[0], values[-1]
            pct = f" ({(last - first) * 100 / first:+.0f}%)" if first else ""
            cells.append(f"{round(last - first, 2):+g}{pct}")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)
