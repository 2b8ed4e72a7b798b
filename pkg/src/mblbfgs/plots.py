"""Render sweep summaries as SVG line charts (mean solid, min/max dashed)."""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

SUMMARY_COLUMNS = ("epoch", "grad_norm_full_mean", "grad_norm_full_min", "grad_norm_full_max")
LOG_CLAMP = 1e-16


def load_summary(path) -> dict[str, np.ndarray]:
    """Read a sweep summary CSV; raises ValueError when columns are missing."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        missing = [c for c in SUMMARY_COLUMNS if c not in names]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        rows = list(reader)
    return {c: np.array([float(row[c]) for row in rows]) for c in SUMMARY_COLUMNS}


def render_summary_figure(summaries: list[tuple[str, dict[str, np.ndarray]]], out_path,
                          logy: bool = False) -> None:
    """One series per summary: solid mean plus dashed min/max envelope.

    With a log axis, nonpositive values are clamped to 1e-16 (with a warning)
    so exact zeros stay plottable. Artists carry gids (series<i>_mean etc.) so
    the emitted SVG is structurally checkable.
    """
    fig = Figure(figsize=(7.0, 4.5))
    ax = fig.add_subplot(111)
    for i, (label, data) in enumerate(summaries):
        color = f"C{i}"
        epochs = data["epoch"]
        series = {
            "mean": data["grad_norm_full_mean"],
            "min": data["grad_norm_full_min"],
            "max": data["grad_norm_full_max"],
        }
        if logy:
            for kind, values in series.items():
                if np.any(values < LOG_CLAMP):
                    warnings.warn(f"{label}/{kind}: clamping {int((values < LOG_CLAMP).sum())} "
                                  f"value(s) to {LOG_CLAMP} for the log axis")
                    series[kind] = np.maximum(values, LOG_CLAMP)
        (line,) = ax.plot(epochs, series["mean"], color=color, label=label)
        line.set_gid(f"series{i}_mean")
        for kind in ("min", "max"):
            (line,) = ax.plot(epochs, series[kind], color=color, linestyle="--",
                              linewidth=0.9, label="_nolegend_")
            line.set_gid(f"series{i}_{kind}")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("full gradient norm")
    ax.legend(loc="best")
    fig.savefig(Path(out_path), format="svg")
