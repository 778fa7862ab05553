"""Figure rendering for the CLI report paths.

Every command that emits a delimited report also renders a matching
figure next to it; everything goes through the Agg backend so headless
runs work.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIG_STYLE = {
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 9,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
}


def _rolling_mean(values: np.ndarray, window: int) -> np.ndarray:
    out = np.empty_like(values, dtype=float)
    csum = np.cumsum(np.concatenate([[0.0], values]))
    for i in range(values.size):
        lo = max(0, i + 1 - window)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out


def write_csv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v
                        for v in (row[c] for c in columns)])


def render_training_curves(metric_rows: list[dict], out_png, window: int = 100) -> None:
    """Loss and DV trajectories from the per-step metrics rows."""
    if not metric_rows:
        return
    steps = np.array([r["step"] for r in metric_rows])
    with plt.rc_context(FIG_STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.5, 4.0))
        for key, color in (("l_all", "tab:blue"), ("l_t", "tab:orange"), ("l_m", "tab:green")):
            vals = np.array([r[key] for r in metric_rows], dtype=float)
            ax1.plot(steps, _rolling_mean(vals, window), label=key, color=color)
        ax1.set_xlabel("step")
        ax1.set_ylabel(f"loss (window-{window} mean)")
        ax1.set_title("training losses")
        ax1.legend()
        for key, color in (("dv_ts", "tab:red"), ("dv_tt", "tab:purple")):
            vals = np.array([r[key] for r in metric_rows], dtype=float)
            ax2.plot(steps, _rolling_mean(vals, window), label=key, color=color)
        ax2.set_xlabel("step")
        ax2.set_ylabel("DV estimate (nats)")
        ax2.set_title("per-side mutual-information estimates")
        ax2.legend()
        fig.savefig(out_png)
        plt.close(fig)


def render_mi_sanity(rows: list, true_mi: float, out_png, window: int = 100) -> None:
    """Raw and smoothed DV estimates against the analytic target."""
    steps = np.array([r[0] for r in rows])
    est = np.array([r[1] for r in rows], dtype=float)
    with plt.rc_context(FIG_STYLE):
        fig, ax = plt.subplots()
        ax.plot(steps, est, color="tab:blue", alpha=0.25, linewidth=0.7, label="per-step estimate")
        ax.plot(steps, _rolling_mean(est, window), color="tab:blue", linewidth=1.8,
                label=f"window-{window} mean")
        ax.axhline(true_mi, color="tab:red", linestyle="--", linewidth=1.2,
                   label=f"analytic MI = {true_mi:.4f}")
        ax.axhline(true_mi + 0.05, color="tab:red", linestyle=":", linewidth=0.9,
                   label="validity margin (+0.05)")
        ax.set_xlabel("step")
        ax.set_ylabel("DV lower bound (nats)")
        ax.set_title("Gaussian mutual-information sanity run")
        ax.legend()
        fig.savefig(out_png)
        plt.close(fig)


def render_sweep(rows: list[dict], out_png) -> None:
    """Accuracy per (D, M) shape as a labeled bar chart."""
    labels = [f"D={r['segment_size']}\nM={r['map_slots']}" for r in rows]
    acc = [r["accuracy"] for r in rows]
    with plt.rc_context(FIG_STYLE):
        fig, ax = plt.subplots()
        bars = ax.bar(np.arange(len(rows)), acc, color="tab:blue", width=0.6)
        ax.bar_label(bars, fmt="%.3f", fontsize=8)
        ax.set_xticks(np.arange(len(rows)), labels)
        ax.set_ylim(0.0, 1.05)
        ax.set_ylabel("held-out accuracy")
        ax.set_title("segment-shape sensitivity")
        fig.savefig(out_png)
        plt.close(fig)
