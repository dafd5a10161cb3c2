"""Static figures written to files (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def coverage_heatmap(structures, noises, grid, path, title="Median variational-CI coverage") -> Path:
    """Structure (rows) by noise (columns) grid of median coverage."""
    grid = np.asarray(grid, dtype=float)
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * len(noises), 1.0 + 0.45 * len(structures)))
    im = ax.imshow(grid, vmin=0, vmax=1, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(noises)), [f"{s:g}" for s in noises])
    ax.set_yticks(range(len(structures)), [str(d) for d in structures])
    ax.set_xlabel("noise proportion")
    ax.set_ylabel("distinct chemicals per pattern")
    for i in range(grid.shape[0]):
        for j in range(grid.shape[1]):
            if np.isfinite(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.2f}", ha="center", va="center",
                        color="white" if grid[i, j] < 0.6 else "black", fontsize=8)
    fig.colorbar(im, ax=ax, label="coverage")
    ax.set_title(title)
    return _save(fig, path)


def loadings_bars(loadings, col_ids, path, title="Pattern loadings") -> Path:
    """One bar panel per pattern (row of ``loadings``)."""
    loadings = np.atleast_2d(np.asarray(loadings, dtype=float))
    k, p = loadings.shape
    fig, axes = plt.subplots(k, 1, figsize=(max(4.0, 0.25 * p), 1.6 * k), sharex=True, squeeze=False)
    for i, ax in enumerate(axes[:, 0]):
        ax.bar(range(p), loadings[i], color="C%d" % (i % 10))
        ax.set_ylabel(f"pattern {i + 1}")
    axes[-1, 0].set_xticks(range(p), list(col_ids), rotation=90, fontsize=7)
    axes[0, 0].set_title(title)
    return _save(fig, path)


def score_intervals(intervals, path, max_rows: int = 50, title="Scaled scores with intervals") -> Path:
    """Error bars for the first ``max_rows`` observations, one panel per pattern."""
    mean = intervals.mean[:max_rows]
    lo, hi = intervals.lower[:max_rows], intervals.upper[:max_rows]
    n, k = mean.shape
    fig, axes = plt.subplots(k, 1, figsize=(max(4.0, 0.15 * n), 1.6 * k), sharex=True, squeeze=False)
    x = np.arange(n)
    for j, ax in enumerate(axes[:, 0]):
        keep = np.isfinite(lo[:, j]) & np.isfinite(hi[:, j])
        ax.vlines(x[keep], lo[keep, j], hi[keep, j], color="0.6")
        ax.plot(x, mean[:, j], ".", color="C%d" % (j % 10))
        ax.set_ylabel(f"pattern {j + 1}")
    axes[-1, 0].set_xlabel("observation")
    axes[0, 0].set_title(title)
    return _save(fig, path)
