"""Matplotlib rendering: tiling SVGs and verification-report figures.

All figures save as SVG with a pinned hash salt and no timestamp so reruns
are byte-identical for the manifest.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "dominofield"

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle as MplRect

from .height import height_field
from .region import PolyominoRegion, is_white

_H_COLOR = "#d08770"
_V_COLOR = "#5e81ac"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_tiling(region: PolyominoRegion, tiling, path, height_overlay=False):
    """One rectangle per domino, color-coded by orientation.

    Holes stay void; the added marked squares are outlined, the removed
    square is marked with a cross.  With height_overlay the vertex heights
    are drawn as a color map on the lattice vertices.
    """
    eps = region.eps
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.set_aspect("equal")
    for (w, b) in tiling.dominoes:
        x0 = (min(w[0], b[0]) - 0.5) * eps
        y0 = (min(w[1], b[1]) - 0.5) * eps
        horizontal = w[1] == b[1]
        width = (2.0 if horizontal else 1.0) * eps
        ht = (1.0 if horizontal else 2.0) * eps
        ax.add_patch(
            MplRect((x0, y0), width, ht,
                    facecolor=_H_COLOR if horizontal else _V_COLOR,
                    edgecolor="white", linewidth=0.4 * eps * 72 / 6)
        )
    for (i, j) in region.added_squares:
        ax.add_patch(
            MplRect(((i - 0.5) * eps, (j - 0.5) * eps), eps, eps, fill=False,
                    edgecolor="#bf616a", linewidth=1.2, zorder=5)
        )
    ri, rj = region.removed_square
    ax.plot(ri * eps, rj * eps, "x", color="#bf616a", markersize=6, zorder=5)
    if height_overlay:
        field = height_field(region, tiling)
        verts = sorted(field.values)
        xs = [(v[0] - 0.5) * eps for v in verts]
        ys = [(v[1] - 0.5) * eps for v in verts]
        hs = [field.values[v] for v in verts]
        sc = ax.scatter(xs, ys, c=hs, s=6, cmap="viridis", zorder=6)
        fig.colorbar(sc, ax=ax, label="height")
    ax.autoscale_view()
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title(f"{len(tiling.dominoes)} dominoes, eps={eps:g}")
    _save(fig, path)


def render_gof(gof, path, title="hole-height law"):
    """Empirical frequencies of centered Z/4 against the predicted pmf."""
    keys = sorted(set(gof.counts) | {k for k, v in gof.probs.items() if v > 1e-6})
    if keys and len(keys[0]) == 1:
        labels = [str(k[0]) for k in keys]
    else:
        labels = [str(k) for k in keys]
    emp = [gof.counts.get(k, 0) / gof.n_samples for k in keys]
    pred = [gof.probs.get(k, 0.0) for k in keys]
    x = np.arange(len(keys))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x - 0.2, emp, width=0.4, label="empirical", color=_V_COLOR)
    ax.bar(x + 0.2, pred, width=0.4, label="predicted", color=_H_COLOR)
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_xlabel("centered hole height / 4")
    ax.set_ylabel("probability")
    ax.set_title(f"{title}: TV={gof.tv_distance:.4f}, p={gof.chi2_pvalue:.3g}")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def render_trend(eps_list, tv_list, path):
    """Total-variation distance against the lattice scale."""
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(eps_list, tv_list, "o-", color=_V_COLOR)
    ax.set_xlabel("lattice scale eps")
    ax.set_ylabel("TV distance to predicted law")
    ax.set_title("scale trend toward the continuum prediction")
    ax.set_xlim(0, max(eps_list) * 1.15)
    ax.set_ylim(bottom=0)
    fig.tight_layout()
    _save(fig, path)


def render_zscores(report, path):
    """Gated z-scores from a moment report."""
    rows = [r for r in report.rows if r.z is not None and np.isfinite(r.z)]
    names = [r.name for r in rows]
    zs = [r.z for r in rows]
    fig, ax = plt.subplots(figsize=(7, 0.35 * len(rows) + 1.5))
    colors = [_V_COLOR if abs(z) <= report.gate else "#bf616a" for z in zs]
    ax.barh(range(len(rows)), zs, color=colors)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels(names, fontsize=7)
    ax.axvline(report.gate, color="gray", linestyle="--", linewidth=0.8)
    ax.axvline(-report.gate, color="gray", linestyle="--", linewidth=0.8)
    ax.set_xlabel("z-score")
    ax.set_title(f"moment gates (N={report.n_samples})")
    fig.tight_layout()
    _save(fig, path)
