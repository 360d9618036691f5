"""Figure rendering for the CLI report path (written next to the CSVs)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGSIZE = (7.0, 4.5)
DPI = 150


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def save_series(path, t, series: dict[str, np.ndarray], ylabel: str = "survival",
                title: str = "") -> Path:
    """Line plot of one or more trajectories over time."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for label, values in series.items():
        ax.plot(t, values, label=label)
    ax.set_xlabel("time")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, Path(path))


def save_band(path, t, lower, point, upper, level: float, title: str = "") -> Path:
    """Point estimate with a shaded pointwise confidence band."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.fill_between(t, lower, upper, alpha=0.3, label=f"{level:.0%} band")
    ax.plot(t, point, label="point estimate")
    ax.set_xlabel("time")
    ax.set_ylabel("survival")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, Path(path))


def save_step_curve(path, jump_times, values, horizon: float | None = None,
                    title: str = "") -> Path:
    """Right-continuous step plot of a survival curve."""
    t = np.concatenate(([0.0], np.asarray(jump_times, dtype=float)))
    v = np.concatenate(([1.0], np.asarray(values, dtype=float)))
    if horizon is not None and (t.size == 0 or horizon > t[-1]):
        t = np.append(t, horizon)
        v = np.append(v, v[-1])
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.step(t, v, where="post")
    ax.set_xlabel("time")
    ax.set_ylabel("survival")
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    return _save(fig, Path(path))


def save_hazard(path, timestamps, values, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot(timestamps, values, drawstyle="steps-post")
    ax.set_xlabel("time")
    ax.set_ylabel("hazard rate")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    return _save(fig, Path(path))


def save_error_boxplot(path, errors_by_group: dict[str, list[float]], title: str = "") -> Path:
    """Boxplots of per-replication errors, one box per configuration."""
    labels = list(errors_by_group)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.boxplot([errors_by_group[k] for k in labels], tick_labels=labels)
    ax.set_ylabel("sup-norm error")
    if title:
        ax.set_title(title)
    ax.tick_params(axis="x", rotation=45)
    ax.grid(alpha=0.3, axis="y")
    return _save(fig, Path(path))
