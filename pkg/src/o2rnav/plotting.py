"""Matplotlib figures for the CLI: scene layouts, potential maps, SR/SPL bars."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .scene import SceneLayout  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_scene(layout: SceneLayout, path, trajectories: Sequence | None = None) -> Path:
    """Room labels over the layout, objects as black footprints, optional (x, y) paths."""
    rooms = layout.room_mask()  # -1 where no room
    cmap = plt.get_cmap("tab20")
    img = np.ones(rooms.shape + (3,))
    for k in range(len(layout.rooms)):
        img[rooms == k] = cmap(k % 20)[:3]
    img[layout.wall_mask()] = 0.35
    img[layout.object_mask()] = 0.0
    res = layout.resolution
    fig, ax = plt.subplots(figsize=(6, 6 * layout.height / layout.width))
    ax.imshow(img, extent=(0, layout.width * res, layout.height * res, 0), interpolation="nearest")
    for k, room in enumerate(layout.rooms):
        r0, c0, r1, c1 = room.rects[0]
        ax.text((c0 + c1) / 2 * res, (r0 + r1) / 2 * res, room.category, ha="center", va="center",
                fontsize=7)
    for traj in trajectories or []:
        xy = np.asarray([(p[0], p[1]) for p in traj])
        if len(xy):
            ax.plot(xy[:, 0], xy[:, 1], lw=1.2)
            ax.plot(*xy[0], "go", ms=4)
            ax.plot(*xy[-1], "rx", ms=5)
    ax.set_title(layout.id)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    return _save(fig, path)


def plot_potentials(sample, category: str, path) -> Path:
    """Explored map plus area, object and room potentials for one dataset sample."""
    base = np.where(sample.obstacle, 0.0, np.where(sample.explored, 1.0, 0.6))
    panels = [("explored map", base, "gray", (0, 1)),
              ("area", sample.area, "viridis", (0, 1)),
              (f"object: {category}", sample.objects[category], "viridis", (0, 1)),
              (f"room: {category}", sample.o2r[category], "coolwarm", (-1, 1))]
    fig, axes = plt.subplots(1, 4, figsize=(14, 3.8))
    for ax, (title, raster, cmap, (lo, hi)) in zip(axes, panels):
        shown = raster if title == "explored map" else np.ma.masked_where(~sample.frontier, raster)
        ax.imshow(base, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        im = ax.imshow(shown, cmap=cmap, vmin=lo, vmax=hi, interpolation="nearest")
        ax.set_title(title)
        ax.set_xticks([])
        ax.set_yticks([])
        if title != "explored map":
            fig.colorbar(im, ax=ax, fraction=0.046)
    return _save(fig, path)


def plot_report_bars(reports: Sequence[dict], path) -> Path:
    """Grouped SR and SPL bars, one group per category, one bar per report."""
    cats = sorted({c for rep in reports for c in rep.get("per_category", {})}) + ["all"]
    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
    width = 0.8 / max(1, len(reports))
    x = np.arange(len(cats))
    for ax, key in zip(axes, ("sr", "spl")):
        for k, rep in enumerate(reports):
            per = dict(rep.get("per_category", {}), all=rep["summary"])
            vals = [per.get(c, {}).get(key) or 0.0 for c in cats]
            ax.bar(x + (k - (len(reports) - 1) / 2) * width, vals, width,
                   label=rep.get("label") or f"run {k}")
        ax.set_xticks(x)
        ax.set_xticklabels(cats, rotation=30)
        ax.set_title(key.upper())
        ax.set_ylim(0, 1.05)
    axes[0].legend(fontsize=8)
    return _save(fig, path)
