"""Matplotlib renderings of the toolkit artifacts, written next to the data.

All functions save to a path and close the figure; the Agg backend keeps
them headless-safe.  Rasters share the palette of the PPM export so the
PNG and PPM views of a basin grid agree.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import ListedColormap

from .basins import BasinGrid, PALETTE
from .continuation import ContinuationResult
from .integrator import TrajectoryOutcome
from .poincare import PssCloud

_DPI = 160
_PNG_META = {"Software": "memsosc"}


def _save(fig, path) -> None:
    fig.savefig(path, dpi=_DPI, metadata=_PNG_META)
    plt.close(fig)


def plot_trajectory(outcome: TrajectoryOutcome, path, title: str = "") -> None:
    """Displacement history and phase portrait of one integration."""
    ts = [s.t for s in outcome.samples]
    xs = [s.x for s in outcome.samples]
    vs = [s.v for s in outcome.samples]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(ts, xs, lw=0.8)
    ax1.set_xlabel("t")
    ax1.set_ylabel("x")
    ax1.grid(True, alpha=0.3)
    if outcome.t_event is not None:
        ax1.axvline(outcome.t_event, color="r", ls="--", lw=0.8,
                    label=f"{outcome.kind} at t={outcome.t_event:.4g}")
        ax1.legend(fontsize=8)
    ax2.plot(xs, vs, lw=0.6)
    ax2.set_xlabel("x")
    ax2.set_ylabel("v")
    ax2.grid(True, alpha=0.3)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)


def plot_pss(cloud: PssCloud, path, title: str = "") -> None:
    """Scatter of the section point cloud, colored by seed."""
    fig, ax = plt.subplots(figsize=(6, 5))
    cmap = plt.get_cmap("viridis")
    n = max(1, len(cloud.points) - 1)
    for sid, pts in enumerate(cloud.points):
        if pts.shape[0] == 0:
            continue
        ax.scatter(pts[:, 0], pts[:, 1], s=0.3, color=cmap(sid / n),
                   linewidths=0, rasterized=True)
    ax.set_xlabel("x")
    ax.set_ylabel("v")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.2)
    fig.tight_layout()
    _save(fig, path)


def _to_unit(rgb):
    return tuple(c / 255.0 for c in rgb)


def plot_basin_classes(grid: BasinGrid, path, title: str = "") -> None:
    """Class raster: same palette as the PPM export."""
    # indices: 0 unresolved, 1 unstable, 2 bounded, 3 att0, 4 att1, 5 att other
    idx = np.zeros(grid.codes.shape, dtype=int)
    idx[(grid.codes == 1) | (grid.codes == 2)] = 1
    idx[grid.codes == 3] = 2
    att = grid.codes == 4
    idx[att & (grid.attractor_ids == 0)] = 3
    idx[att & (grid.attractor_ids == 1)] = 4
    idx[att & (grid.attractor_ids > 1)] = 5
    cmap = ListedColormap([_to_unit(PALETTE["unresolved"]),
                           _to_unit(PALETTE["unstable"]),
                           _to_unit(PALETTE["bounded"]),
                           _to_unit(PALETTE["attractor0"]),
                           _to_unit(PALETTE["attractor1"]),
                           _to_unit(PALETTE["attractor_other"])])
    extent = (*grid.spec.x_range, *grid.spec.v_range)
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.imshow(idx, origin="lower", extent=extent, aspect="auto",
              cmap=cmap, vmin=-0.5, vmax=5.5, interpolation="nearest")
    ax.set_xlabel("x(0)")
    ax.set_ylabel("v(0)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_basin_amplitude(grid: BasinGrid, path, title: str = "") -> None:
    """Amplitude raster of the bounded cells; unbounded cells are blank."""
    amp = np.ma.masked_invalid(grid.amplitudes)
    extent = (*grid.spec.x_range, *grid.spec.v_range)
    fig, ax = plt.subplots(figsize=(6.4, 5))
    im = ax.imshow(amp, origin="lower", extent=extent, aspect="auto",
                   cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, label="max |x|")
    ax.set_xlabel("x(0)")
    ax.set_ylabel("v(0)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_continuation(result: ContinuationResult, path, title: str = "") -> None:
    """Audit trail of the c* search: probed dampings and their verdicts."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ok_c = [s.c for s in result.steps if s.converged]
    bad_c = [s.c for s in result.steps if not s.converged]
    ax.plot(range(len(result.steps)),
            [s.c for s in result.steps], color="0.8", lw=0.8, zorder=1)
    ax.scatter([i for i, s in enumerate(result.steps) if s.converged], ok_c,
               s=14, color="tab:green", label="orbit found", zorder=2)
    ax.scatter([i for i, s in enumerate(result.steps) if not s.converged], bad_c,
               s=14, color="tab:red", marker="x", label="lost", zorder=2)
    ax.axhline(result.c_star, color="k", ls="--", lw=0.8,
               label=f"c* = {result.c_star:.3e}")
    ax.set_yscale("log")
    ax.set_xlabel("probe index")
    ax.set_ylabel("damping c")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
