"""Deterministic result files: metrics CSV, markdown report, run manifest.

Output bytes are a pure function of the results: rows are explicitly sorted,
floats formatted with fixed precision, JSON keys sorted, newlines LF.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from .continual import ComparisonReport
from .metrics import format_cell

METRICS_HEADER = "method,task,repetition,class,precision,recall,f"


def atomic_write(path: str | Path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partials."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def metrics_csv(comparisons: dict[str, ComparisonReport]) -> str:
    """One row per (method, task, repetition, class).

    `comparisons` maps a method label prefix ("" for the primary run, a
    variant name otherwise) to its comparison; labels become
    "strategy" or "strategy/variant".
    """
    lines = [METRICS_HEADER]
    for variant in sorted(comparisons):
        comp = comparisons[variant]
        for strat in comp.strategies:
            method = strat if not variant else f"{strat}/{variant}"
            for r, run in enumerate(comp.runs[strat]):
                for task in run.tasks:
                    rep = task.report
                    for idx, cid in enumerate(task.class_ids):
                        lines.append(
                            f"{method},{task.task_index},{r},{cid},"
                            f"{_fmt(rep.precision[idx])},{_fmt(rep.recall[idx])},"
                            f"{_fmt(rep.f_score[idx])}"
                        )
    return "\n".join(lines) + "\n"


def _strategy_label(strategy: str) -> str:
    return {
        "rcl": "RCL",
        "ewc": "EWC",
        "finetune": "Fine-tuning",
        "baseline": "Baseline",
    }.get(strategy, strategy)


def comparison_table(comp: ComparisonReport, variant: str = "") -> str:
    """Strategies x tasks, each cell a macro 'mean (std)' over repetitions."""
    n_tasks = len(next(iter(comp.summaries.values())).per_task_mean)
    header = ["Method"]
    for t in range(1, n_tasks + 1):
        header += [f"Task {t} Precision", f"Task {t} Recall", f"Task {t} F-score"]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
    ]
    for strat in comp.strategies:
        s = comp.summaries[strat]
        label = _strategy_label(strat)
        if variant:
            label = f"{label} ({variant})"
        row = [label]
        for t in range(n_tasks):
            mean, std = s.per_task_mean[t], s.per_task_std[t]
            row += [
                format_cell(mean.macro_precision, std.macro_precision),
                format_cell(mean.macro_recall, std.macro_recall),
                format_cell(mean.macro_f, std.macro_f),
            ]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def variant_table(comparisons: dict[str, ComparisonReport]) -> str:
    """Strategies x classifier variants on the final task, macro metrics."""
    variants = sorted(v for v in comparisons if v)
    strategies = comparisons[variants[0]].strategies
    header = ["Method"]
    for v in variants:
        header += [f"{v} Precision", f"{v} Recall", f"{v} F-score"]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
    ]
    for strat in strategies:
        row = [_strategy_label(strat)]
        for v in variants:
            s = comparisons[v].summaries[strat]
            mean, std = s.per_task_mean[-1], s.per_task_std[-1]
            row += [
                format_cell(mean.macro_precision, std.macro_precision),
                format_cell(mean.macro_recall, std.macro_recall),
                format_cell(mean.macro_f, std.macro_f),
            ]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def storage_section(comp: ComparisonReport) -> str:
    lines = [
        "| Method | Raw windows retained | Pseudo samples per task |",
        "|---|---|---|",
    ]
    for strat in comp.strategies:
        s = comp.summaries[strat]
        replay = "; ".join(
            f"task {t + 1}: "
            + (
                ", ".join(f"class {c}: {n}" for c, n in sorted(counts.items()))
                if counts
                else "none"
            )
            for t, counts in enumerate(s.replay_counts)
        )
        lines.append(f"| {_strategy_label(strat)} | {s.memory_footprint} | {replay} |")
    return "\n".join(lines)


def spread_section(comp: ComparisonReport) -> str:
    n_tasks = len(next(iter(comp.summaries.values())).per_task_mean)
    header = ["Method"] + [f"Task {t} member F std" for t in range(1, n_tasks + 1)]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for strat in comp.strategies:
        s = comp.summaries[strat]
        lines.append(
            "| "
            + " | ".join([_strategy_label(strat)] + [f"{v:.3f}" for v in s.member_spread])
            + " |"
        )
    return "\n".join(lines)


def render_report(comparisons: dict[str, ComparisonReport]) -> str:
    """Full markdown report; one strategy/task table per variant plus the
    final-task variant comparison when multiple classifiers were run."""
    primary = comparisons.get("", next(iter(comparisons.values())))
    parts = ["# Continual learning benchmark", ""]
    parts.append(
        f"Classes (task order): {', '.join(str(c) for c in primary.class_ids)}. "
        f"Repetitions per strategy: {primary.repetitions}. "
        "Cells are macro averages over classes as 'mean (std)' across repetitions."
    )
    for variant in sorted(comparisons):
        comp = comparisons[variant]
        title = "## Strategy comparison" + (f" - classifier: {variant}" if variant else "")
        parts += ["", title, "", comparison_table(comp, variant)]
    variants = [v for v in comparisons if v]
    if len(variants) >= 2:
        parts += [
            "",
            "## Final-task comparison across classifiers",
            "",
            variant_table(comparisons),
        ]
    parts += ["", "## Storage", "", storage_section(primary)]
    parts += ["", "## Ensemble member spread", "", spread_section(primary), ""]
    return "\n".join(parts)


def build_manifest(
    config_doc: dict,
    comparisons: dict[str, ComparisonReport],
    data_digest: str,
    failures: dict[str, str] | None = None,
) -> dict:
    seeds = {}
    for variant, comp in comparisons.items():
        for strat, runs in comp.runs.items():
            method = strat if not variant else f"{strat}/{variant}"
            seeds[method] = [run.seed for run in runs]
    manifest = {
        "status": "FAILED" if failures else "ok",
        "config": config_doc,
        "data_digest": data_digest,
        "seeds": seeds,
        "outputs": ["metrics.csv", "report.md"],
    }
    if failures:
        manifest["failures"] = failures
    return manifest


def manifest_json(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True, indent=2) + "\n"
