"""Static figures of a finished run, written as PNG files.

Uses the non-interactive Agg backend and strips the PNG metadata so a fixed
seed gives identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE = dict(dpi=100, metadata={"Software": None})


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="png", **_SAVE)
    plt.close(fig)
    return path


def plot_field(grid, path) -> Path:
    """Heat map of the converted material ``m0 - c`` (2d grids only)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 4))
    g = grid.m0 - grid.c
    if grid.d == 1:
        ax.plot(grid.axes()[0], g, lw=1)
        ax.set_xlabel("x")
        ax.set_ylabel("m0 - c")
    else:
        plane = g if grid.d == 2 else g[:, :, g.shape[2] // 2]
        x, y = grid.axes()[:2]
        im = ax.imshow(plane.T, origin="lower", extent=(x[0], x[-1], y[0], y[-1]),
                       cmap="viridis", interpolation="nearest")
        fig.colorbar(im, ax=ax, label="m0 - c")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    ax.set_title("converted material")
    return _save(fig, path)


def plot_paths(traj, path) -> Path:
    """Recorded particle paths projected on the first two coordinates."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 5))
    if traj.positions:
        P = np.stack(traj.positions)
        for i in range(P.shape[1]):
            xs = P[:, i, 0]
            ys = P[:, i, 1] if P.shape[2] > 1 else np.asarray(traj.times)
            ax.plot(xs, ys, lw=0.6)
            ok = np.flatnonzero(np.isfinite(xs))
            if len(ok):
                ax.plot(xs[ok[-1]], ys[ok[-1]], "k.", ms=3)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2" if not traj.positions or traj.positions[0].shape[1] > 1 else "t")
    ax.set_title("particle paths")
    ax.set_aspect("equal" if traj.positions and traj.positions[0].shape[1] > 1 else "auto")
    return _save(fig, path)


def plot_survival(events, n0: int, T: float, path) -> Path:
    """Number of active particles against time."""
    path = Path(path)
    t = np.sort(np.asarray(events.times, dtype=float))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.step(np.concatenate([[0.0], t, [T]]), np.concatenate([[n0], n0 - np.arange(1, len(t) + 1),
                                                             [n0 - len(t)]]), where="post")
    ax.set_xlabel("t")
    ax.set_ylabel("active particles")
    ax.set_ylim(0, n0 + 0.5)
    return _save(fig, path)


def plot_gap(traj, dt: float, path) -> Path:
    """Smallest active pair distance at the start of every step."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    g = np.asarray(traj.min_gap, dtype=float)
    ax.plot(np.arange(len(g)) * dt, np.where(np.isfinite(g), g, np.nan), lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("min gap")
    return _save(fig, path)


def export_figures(result, params, out_dir) -> List[Path]:
    """All run figures into ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    return [
        plot_field(result.field, out / "field.png"),
        plot_paths(result.trajectory, out / "paths.png"),
        plot_survival(result.events, params.N, params.T, out / "survival.png"),
        plot_gap(result.trajectory, params.dt, out / "min_gap.png"),
    ]
