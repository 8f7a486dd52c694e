"""SVG boxplots of an evaluation report."""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from pita.evaluation.report import GROUND_TRUTH, EvalReport  # noqa: E402

FIGURES = {
    "rmse": ("rmse_boxplot.svg", "RMSE [m]"),
    "abs_accel": ("acceleration_boxplot.svg", "|a| [m/s²]"),
    "abs_kappa": ("kappa_boxplot.svg", "|κ| [1/m]"),
    "smooth_distance": ("distance_boxplot.svg", "distance to smoothed path [m]"),
}


def plot_report(report: EvalReport, out_dir) -> list[Path]:
    """Write one boxplot per metric; ground truth is included where defined."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    with plt.rc_context({"svg.hashsalt": "pita", "svg.fonttype": "none"}):
        for metric, (filename, ylabel) in FIGURES.items():
            names = [n for n in report.samples if metric in report.samples[n]]
            names.sort(key=lambda n: n == GROUND_TRUTH)
            data = [np.ravel(report.samples[n][metric]) for n in names]
            fig, ax = plt.subplots(figsize=(6.4, 3.2))
            ax.boxplot(data, showfliers=False)
            ax.set_xticks(range(1, len(names) + 1), names)
            ax.set_ylabel(ylabel)
            ax.grid(axis="y", alpha=0.3)
            fig.tight_layout()
            path = out_dir / filename
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            paths.append(path)
    return paths
