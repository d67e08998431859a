"""Figures rendered next to the report's JSON and CSV files."""

from __future__ import annotations

from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .simcore import MS_PER_HOUR  # noqa: E402


def plot_demand(report: dict, path: Path) -> Path:
    rows = np.asarray(report["series"]["rows"], dtype=float)
    horizon_h = report["horizon_ms"] / MS_PER_HOUR
    fig, ax = plt.subplots(figsize=(9, 4.5))
    if rows.size:
        t = np.append(rows[:, 0] / MS_PER_HOUR, horizon_h)
        for col, label, style in ((2, "uncontrolled", "C3"), (3, "controlled", "C0"), (1, "base load", "0.5")):
            y = np.append(rows[:, col], rows[-1, col])
            ax.step(t, y, where="post", color=style, label=label, lw=1.2)
    if report.get("threshold_kw") is not None:
        ax.axhline(report["threshold_kw"], color="k", ls="--", lw=1, label="threshold")
    ax.set_xlim(0, horizon_h)
    ax.set_xlabel("time (h)")
    ax.set_ylabel("demand (kW)")
    ax.set_title(report["scenario"])
    ax.legend(loc="upper left", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_wastage(report: dict, path: Path) -> Path:
    rooms = report["wastage"]["rooms"]
    names = [r["room"] for r in rooms]
    x = np.arange(len(rooms))
    fig, (ax_l, ax_a) = plt.subplots(1, 2, figsize=(10, 4))
    ax_l.bar(x, [r["lights_kwh"] for r in rooms], color="C1")
    ax_a.bar(x, [r["acs_kwh"] for r in rooms], color="C0")
    for ax, title in ((ax_l, "lights"), (ax_a, "air conditioning")):
        ax.set_xticks(x, names, rotation=45, ha="right", fontsize=8)
        ax.set_ylabel("energy wasted (kWh)")
        ax.set_title(title)
        ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_figures(report: dict, out_dir: Path) -> List[Path]:
    paths = []
    if report["series"]["rows"]:
        paths.append(plot_demand(report, out_dir / "demand.png"))
    if report.get("wastage"):
        paths.append(plot_wastage(report, out_dir / "wastage.png"))
    return paths
