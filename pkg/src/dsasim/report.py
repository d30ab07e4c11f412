"""Report emission: a flat CSV of per-run metrics, a JSON document carrying
the series data, and rendered summary figures next to them."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricsReport, moving_average

CSV_COLUMNS = [
    "scenario_id",
    "policy",
    "repetition",
    "slots",
    "right_idle",
    "conservative",
    "success",
    "failure",
    "decision_accuracy",
    "modified_decision_accuracy",
    "beta",
    "interference",
    "discounted_return",
    "gamma",
    "final_avg_max_q",
    "train_updates",
    "wall_clock_per_decision_s",
]

# Columns whose values vary across byte-identical reruns.
TIMING_COLUMNS = ("wall_clock_per_decision_s",)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_row(report: MetricsReport) -> dict[str, str]:
    return {
        "scenario_id": report.scenario_id,
        "policy": report.policy,
        "repetition": str(report.repetition),
        "slots": str(report.slots),
        "right_idle": str(report.right_idle),
        "conservative": str(report.conservative),
        "success": str(report.success),
        "failure": str(report.failure),
        "decision_accuracy": _cell(report.decision_accuracy),
        "modified_decision_accuracy": _cell(report.modified_decision_accuracy),
        "beta": _cell(report.beta),
        "interference": _cell(report.interference),
        "discounted_return": _cell(report.discounted_return),
        "gamma": _cell(report.gamma),
        "final_avg_max_q": _cell(report.final_avg_max_q),
        "train_updates": _cell(report.train_updates),
        "wall_clock_per_decision_s": _cell(report.wall_clock_per_decision),
    }


def write_csv(reports: Sequence[MetricsReport], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            writer.writerow(report_row(report))
    return path


def _json_entry(report: MetricsReport) -> dict:
    entry = {
        "scenario_id": report.scenario_id,
        "policy": report.policy,
        "repetition": report.repetition,
        "slots": report.slots,
        "right_idle": report.right_idle,
        "conservative": report.conservative,
        "success": report.success,
        "failure": report.failure,
        "decision_accuracy": report.decision_accuracy,
        "modified_decision_accuracy": report.modified_decision_accuracy,
        "beta": report.beta,
        "interference": report.interference,
        "discounted_return": report.discounted_return,
        "gamma": report.gamma,
        "wall_clock_per_decision_s": report.wall_clock_per_decision,
        "rewards": list(report.rewards),
    }
    if report.avg_max_q_series is not None:
        entry["avg_max_q_series"] = list(report.avg_max_q_series)
    if report.final_avg_max_q is not None:
        entry["final_avg_max_q"] = report.final_avg_max_q
    if report.train_updates is not None:
        entry["train_updates"] = report.train_updates
    return entry


def write_json(reports: Sequence[MetricsReport], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"reports": [_json_entry(report) for report in reports]}
    path.write_text(json.dumps(document, indent=2) + "\n")
    return path


def emit_report(reports: Sequence[MetricsReport], fmt: str, out_dir: str | Path) -> list[Path]:
    """Write report.csv and/or report.json under out_dir per the format flag."""
    if not reports:
        raise ValueError("emit_report needs at least one report")
    if fmt not in ("csv", "json", "both"):
        raise ValueError(f"format must be csv, json, or both, got {fmt!r}")
    out_dir = Path(out_dir)
    written = []
    if fmt in ("csv", "both"):
        written.append(write_csv(reports, out_dir / "report.csv"))
    if fmt in ("json", "both"):
        written.append(write_json(reports, out_dir / "report.json"))
    return written


def _ordered_unique(values):
    seen = []
    for value in values:
        if value not in seen:
            seen.append(value)
    return seen


def _grouped_bars(ax, reports, scenario_ids, policies, attribute):
    width = 0.8 / max(len(policies), 1)
    lookup = {(r.scenario_id, r.policy): getattr(r, attribute) for r in reports if r.repetition == 0}
    base = np.arange(len(scenario_ids))
    for offset, policy in enumerate(policies):
        values = [lookup.get((sid, policy), np.nan) for sid in scenario_ids]
        ax.bar(base + offset * width, values, width=width, label=policy)
    ax.set_xticks(base + 0.4 - width / 2)
    ax.set_xticklabels(scenario_ids, rotation=45, ha="right")
    ax.legend(fontsize=8)


def render_figures(reports: Sequence[MetricsReport], out_dir: str | Path) -> list[Path]:
    """Render the summary figures for a batch of reports, returning the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario_ids = _ordered_unique(r.scenario_id for r in reports)
    policies = _ordered_unique(r.policy for r in reports)
    written: list[Path] = []

    fig, axes = plt.subplots(1, 2, figsize=(max(6.0, 1.8 * len(scenario_ids)), 3.5), sharey=True)
    _grouped_bars(axes[0], reports, scenario_ids, policies, "decision_accuracy")
    axes[0].set_title("decision accuracy")
    axes[0].set_ylim(0.0, 1.05)
    _grouped_bars(axes[1], reports, scenario_ids, policies, "modified_decision_accuracy")
    axes[1].set_title("modified decision accuracy")
    path = out_dir / "accuracy.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(max(5.0, 1.5 * len(scenario_ids)), 3.5))
    _grouped_bars(ax, reports, scenario_ids, policies, "interference")
    ax.set_title("interference rate")
    path = out_dir / "interference.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(max(5.0, 1.5 * len(scenario_ids)), 3.5))
    _grouped_bars(ax, reports, scenario_ids, policies, "wall_clock_per_decision")
    ax.set_yscale("log")
    ax.set_title("mean seconds per decision")
    path = out_dir / "timing.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    for sid in scenario_ids:
        fig, ax = plt.subplots(figsize=(6.0, 3.5))
        for policy in policies:
            rows = [r for r in reports if r.scenario_id == sid and r.policy == policy and r.repetition == 0]
            if not rows or not rows[0].rewards:
                continue
            gamma = rows[0].gamma
            weights = gamma ** np.arange(len(rows[0].rewards))
            ax.plot(np.cumsum(weights * np.asarray(rows[0].rewards)), label=policy, linewidth=1.0)
        ax.set_xlabel("slot")
        ax.set_ylabel("cumulative discounted reward")
        ax.set_title(sid)
        ax.legend(fontsize=8)
        path = out_dir / f"reward_{sid}.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    for sid in scenario_ids:
        traced = [
            r
            for r in reports
            if r.scenario_id == sid and r.avg_max_q_series and r.repetition == 0
        ]
        if not traced:
            continue
        fig, ax = plt.subplots(figsize=(6.0, 3.5))
        for row in traced:
            series = np.asarray(row.avg_max_q_series)
            ax.plot(series, alpha=0.35, linewidth=0.7, label=f"{row.policy} raw")
            if series.shape[0] >= 500:
                smooth = moving_average(series, 500)
                ax.plot(np.arange(499, series.shape[0]), smooth, linewidth=1.4, label=f"{row.policy} smoothed")
        ax.set_xlabel("training update")
        ax.set_ylabel("avg max Q")
        ax.set_title(sid)
        ax.legend(fontsize=8)
        path = out_dir / f"avg_max_q_{sid}.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    return written
