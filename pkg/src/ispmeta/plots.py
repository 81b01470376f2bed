"""Report figures: per-resource timeline and per-mode stage breakdown."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .ssd.sim import STAGES, Timeline  # noqa: E402

STAGE_COLORS = {
    "setup": "#7f7f7f",
    "spill": "#bcbd22",
    "sort": "#1f77b4",
    "transfer": "#ff7f0e",
    "intersect": "#2ca02c",
    "taxid": "#d62728",
    "merge": "#9467bd",
}
BREAKDOWN_ORDER = ("setup", "input processing", "intersection finding", "tax-ID retrieval",
                   "index merging")

# fixed metadata keeps PNG bytes identical across runs
_PNG_META = {"Software": None}


def _row(resource: str) -> str:
    return "flash channels" if resource.startswith("ch") else resource


def plot_timeline(timeline: Timeline, path: str | Path, title: str | None = None) -> Path:
    """Gantt chart with one row per resource; channels share one row."""
    rows: list[str] = []
    for e in timeline.events:
        r = _row(e.resource)
        if r not in rows:
            rows.append(r)
    fig, ax = plt.subplots(figsize=(8, 0.5 + 0.45 * max(len(rows), 1)))
    seen = set()
    for e in timeline.events:
        y = rows.index(_row(e.resource))
        label = e.stage if e.stage not in seen else None
        seen.add(e.stage)
        ax.barh(y, max(e.duration, 0.0), left=e.start, height=0.6,
                color=STAGE_COLORS.get(e.stage, "k"), label=label, linewidth=0)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels(rows)
    ax.invert_yaxis()
    ax.set_xlabel("time [s]")
    ax.set_title(title or f"{timeline.mode} timeline (total {timeline.total:.4g} s)")
    if seen:
        ax.legend(loc="center left", bbox_to_anchor=(1.01, 0.5), fontsize=7, frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_PNG_META, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_breakdown(timelines: Mapping[str, Timeline], path: str | Path,
                   title: str = "time breakdown") -> Path:
    """Stacked bars of stage-group time, one bar per mode (or run)."""
    labels = list(timelines)
    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(labels), 4))
    bottoms = [0.0] * len(labels)
    for group in BREAKDOWN_ORDER:
        vals = [timelines[l].breakdown.get(group, 0.0) for l in labels]
        if not any(vals):
            continue
        ax.bar(labels, vals, bottom=bottoms, label=group)
        bottoms = [b + v for b, v in zip(bottoms, vals)]
    for i, l in enumerate(labels):
        ax.plot([i - 0.4, i + 0.4], [timelines[l].total] * 2, color="k", linewidth=1)
    ax.set_ylim(bottom=0)
    ax.set_ylabel("seconds (bars: busy time per stage; line: wall time)")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


__all__ = ["STAGES", "plot_breakdown", "plot_timeline"]
