"""Report figures rendered next to the delimited output.

Bar charts of the weighted mean score (with standard-error bars) and of the
simulated average rank per model. Rendering is headless and deterministic:
fixed figure geometry and no environment-dependent metadata in the files.
"""

from __future__ import annotations

import math
import os
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

if TYPE_CHECKING:
    from .harness import AggregateReport

__all__ = ["render_report_figures"]

# Strip the library-version text chunk so identical runs give identical bytes.
_PNG_METADATA = {"Software": None}


def _bar_chart(path: str, labels, values, errors, ylabel: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(labels) + 1.5), 3.6), dpi=150)
    positions = range(len(labels))
    ax.bar(positions, values, yerr=errors, capsize=3, color="#4878a8")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.margins(y=0.1)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)


def render_report_figures(report: "AggregateReport", out_dir: str) -> list[str]:
    """Write score and rank bar charts for the aggregate report; returns the
    paths written. The rank chart is skipped when no ranks were simulated."""
    os.makedirs(out_dir, exist_ok=True)
    rows = [r for r in report.rows if not math.isnan(r.weighted_mean_rcrps)]
    paths = []
    if rows:
        score_path = os.path.join(out_dir, "rcrps_by_model.png")
        _bar_chart(
            score_path,
            [r.model_id for r in rows],
            [r.weighted_mean_rcrps for r in rows],
            [r.stderr for r in rows],
            ylabel="weighted mean RCRPS",
            title="Score by model (lower is better)",
        )
        paths.append(score_path)
    ranked = [r for r in rows if not math.isnan(r.avg_rank_mean)]
    if ranked:
        rank_path = os.path.join(out_dir, "avg_rank_by_model.png")
        _bar_chart(
            rank_path,
            [r.model_id for r in ranked],
            [r.avg_rank_mean for r in ranked],
            [r.avg_rank_std for r in ranked],
            ylabel="average rank",
            title="Simulated average rank by model",
        )
        paths.append(rank_path)
    return paths
