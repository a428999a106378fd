"""CSV emission and figure rendering for the experiment harness.

CSV is the data boundary: byte-identical for a fixed config and seed, with
floats at 9 significant digits.  Figures are a convenience layer rendered
next to the CSV; they never feed back into any computation.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .pipeline import DynamismStats, SweepRow, TaggedReport

__all__ = [
    "RUN_COLUMNS",
    "format_value",
    "write_csv",
    "run_rows",
    "write_summary_json",
    "render_run_figure",
    "render_sweep_figure",
    "render_quant_figure",
    "render_budget_curve_figure",
]

RUN_COLUMNS = [
    "prompt", "step", "layer", "head", "group", "bypassed",
    "n", "b0", "b1",
    "candidate_mass", "true_mass", "spearman",
    "threshold", "iterations",
    "residual_error", "value_norm", "error_bound",
    "tokens_selector", "tokens_estimator", "tokens_attention",
    "estimator_bytes", "cost_units", "baseline_units", "modeled_speedup",
]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def run_rows(tagged: list[TaggedReport], groups: dict, bypassed: dict) -> list[list]:
    """Flatten tagged reports into RUN_COLUMNS order."""
    rows = []
    for t in tagged:
        r = t.report
        key = (t.prompt, t.step, t.layer, t.head)
        rows.append([
            t.prompt, t.step, t.layer, t.head, groups.get(key, t.head),
            bypassed.get(key, False),
            r.n, r.b0, r.b1,
            r.attained_candidate_mass, r.attained_true_mass, r.estimator_spearman,
            r.threshold, r.iterations,
            r.residual_error, r.value_norm, r.error_bound,
            r.tokens_selector, r.tokens_estimator, r.tokens_attention,
            r.estimator_bytes, r.cost_units, r.baseline_units, r.modeled_speedup,
        ])
    return rows


def _axis_summary_dict(summary) -> dict:
    return {
        "mean": summary.mean,
        "std": summary.std,
        "min": summary.min,
        "max": summary.max,
        "group_means": {str(k): v for k, v in summary.group_means.items()},
        "histogram_edges": list(summary.histogram_edges),
        "histogram_counts": list(summary.histogram_counts),
    }


def write_summary_json(path, dynamism: DynamismStats | None, extra: dict) -> None:
    doc = dict(extra)
    if dynamism is not None:
        doc["dynamism"] = {
            "overall_mean_b1": dynamism.overall_mean,
            "overall_std_b1": dynamism.overall_std,
            "axes": {axis: _axis_summary_dict(s) for axis, s in dynamism.axes.items()},
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _new_axes(n_panels: int):
    cols = 2 if n_panels > 1 else 1
    rows = math.ceil(n_panels / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(4.5 * cols, 3.2 * rows))
    return fig, ([axes] if n_panels == 1 else list(axes.ravel()))


def render_run_figure(path, dynamism: DynamismStats) -> Path:
    """Per-axis budget histograms from a run's dynamism summary."""
    axes_names = list(dynamism.axes)
    fig, panels = _new_axes(len(axes_names))
    for panel, axis in zip(panels, axes_names):
        s = dynamism.axes[axis]
        edges = list(s.histogram_edges)
        counts = list(s.histogram_counts)
        widths = [b - a for a, b in zip(edges, edges[1:])]
        panel.bar(edges[:-1], counts, width=widths, align="edge", color="#4878a8", edgecolor="white")
        panel.set_title(f"mean final budget by {axis}")
        panel.set_xlabel("b1")
        panel.set_ylabel("groups")
    for panel in panels[len(axes_names):]:
        panel.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_sweep_figure(path, rows: list[SweepRow]) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ps = [r.p for r in rows]
    ax.plot(ps, [r.mean_b1 for r in rows], marker="o", color="#4878a8", label="mean b1")
    ax.set_xlabel("p")
    ax.set_ylabel("mean final budget", color="#4878a8")
    twin = ax.twinx()
    twin.plot(ps, [r.mean_attained_true_mass for r in rows], marker="s",
              color="#b05a4a", label="mean true mass")
    twin.set_ylabel("mean attained true mass", color="#b05a4a")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_quant_figure(path, labels: list[str], masses: list[list[float]]) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.boxplot(masses, tick_labels=labels)
    ax.set_xlabel("estimator code width")
    ax.set_ylabel("attained true mass")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_budget_curve_figure(path, ps: list[float], mean_budgets: list[float]) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.plot(ps, mean_budgets, marker="o", color="#4878a8")
    ax.set_xlabel("p")
    ax.set_ylabel("mean minimal budget")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
