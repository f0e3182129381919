"""
Plots written next to each run's CSV: phase portraits and stride residuals.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

PORTRAITS = {
    "btslip": [("y", "ydot", "CoM height y [m]", "ydot [m/s]"), ("phi", "phidot", "trunk pitch phi [rad]", "phidot [rad/s]")],
    "fivelink": [("q5", "qdot5", "trunk angle q5 [rad]", "qdot5 [rad/s]"), ("com_y", "com_ydot", "CoM height [m]", "CoM vertical speed [m/s]")],
}


def plot_phase_portraits(rows: List[Dict[str, object]], model: str, output_path: str | Path) -> None:
    if not rows:
        return
    df = pd.DataFrame(rows)
    panels = PORTRAITS[model]
    fig, axes = plt.subplots(1, len(panels), figsize=(6 * len(panels), 5))
    for ax, (x_col, y_col, x_label, y_label) in zip(axes, panels):
        ax.plot(df[x_col], df[y_col], color="#34495e", linewidth=0.8)
        events = df[df["event"] != ""]
        ax.scatter(events[x_col], events[y_col], s=8, color="#e74c3c", zorder=3)
        ax.set_xlabel(x_label)
        ax.set_ylabel(y_label)
        ax.grid(linestyle="--", alpha=0.3)
    fig.suptitle("Phase portraits", fontsize=14, fontweight="bold")
    fig.tight_layout(rect=[0, 0.03, 1, 0.95])
    Path(output_path).parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(output_path, dpi=300, bbox_inches="tight")
    plt.close(fig)


def plot_stride_residuals(residuals: Sequence[float], output_path: str | Path, title: str = "Stride residuals") -> None:
    if not residuals:
        return
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.semilogy(range(1, len(residuals) + 1), residuals, marker="o", markersize=3, color="#2ecc71")
    ax.set_xlabel("stride")
    ax.set_ylabel("max |dS|")
    ax.set_title(title, fontsize=12, fontweight="bold")
    ax.grid(which="both", linestyle="--", alpha=0.3)
    Path(output_path).parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(output_path, dpi=300, bbox_inches="tight")
    plt.close(fig)
