"""Benchmark figures: RMSE against noise level, one panel per resolution,
rendered to PNG files next to the CSV output."""

from __future__ import annotations

import os
import re
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["render_bench_figures"]


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "-", text).strip("-") or "scene"


def render_bench_figures(rows, out_dir) -> list[str]:
    """One figure per scene; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    by_scene = defaultdict(list)
    for r in rows:
        by_scene[r.scene].append(r)
    written = []
    for scene, scene_rows in sorted(by_scene.items()):
        sizes = sorted({r.n for r in scene_rows})
        fig, axes = plt.subplots(
            1, len(sizes), figsize=(4.2 * len(sizes), 3.4), squeeze=False, sharey=True
        )
        for ax, n in zip(axes[0], sizes):
            for method in sorted({r.method for r in scene_rows if r.n == n}):
                pts = sorted(
                    (r for r in scene_rows if r.n == n and r.method == method),
                    key=lambda r: r.sd,
                )
                sds = [r.sd for r in pts]
                means = [r.mean_rmse for r in pts]
                errs = [r.sd_rmse for r in pts]
                ax.errorbar(sds, means, yerr=errs, marker="o", capsize=3, label=method)
            ax.set_title(f"{scene}, {n}x{n}")
            ax.set_xlabel("noise sd")
            ax.grid(True, alpha=0.3)
        axes[0][0].set_ylabel("mean RMSE")
        axes[0][-1].legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, f"bench_{_slug(scene)}.png")
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)
    return written
