"""Deterministic SVG figures: colour diagrams, solution profiles and the
bifurcation diagram."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import to_rgba  # noqa: E402

from ..shooting import MASKED, ColorGrid, Quadrant  # noqa: E402

QUADRANT_COLORS = {
    Quadrant.GREEN: "#2ca02c",
    Quadrant.YELLOW: "#ffdf00",
    Quadrant.BLUE: "#1f77b4",
    Quadrant.RED: "#d62728",
}
BRANCH_STYLE = {"lower": ("#1f77b4", "o"), "upper": ("#d62728", "s")}

_RC = {
    "svg.hashsalt": "ccshoot",
    "svg.fonttype": "path",
    "path.simplify": False,
    "font.size": 9,
}


def _to_svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return buf.getvalue()


def grid_rgba(grid: ColorGrid) -> np.ndarray:
    """RGBA raster, rows indexed by dv (bottom row = dv_min); masked
    vertices are fully transparent."""
    lut = np.zeros((5, 4))
    for q, c in QUADRANT_COLORS.items():
        lut[int(q)] = to_rgba(c)
    codes = np.where(grid.labels == MASKED, 4, grid.labels).astype(int)
    return lut[codes.T]


def render_color_diagram(grid: ColorGrid, roots=(), title: str | None = None) -> str:
    """Vertex colours as filled cells centred on each vertex; black circles
    at ``roots`` (objects with du0/dv0 or (du0, dv0) pairs)."""
    w = grid.window
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 4.2))
        hu, hv = 0.5 * w.step_u, 0.5 * w.step_v
        du, dv = grid.du, grid.dv
        extent = (du[0] - hu, du[-1] + hu, dv[0] - hv, dv[-1] + hv)
        if grid.evaluated.any():
            ax.imshow(grid_rgba(grid), origin="lower", extent=extent, aspect="auto",
                      interpolation="nearest")
        pts = [(r.du0, r.dv0) if hasattr(r, "du0") else tuple(r) for r in roots]
        if pts:
            xs, ys = zip(*pts)
            ax.plot(xs, ys, "o", markersize=7, markerfacecolor="black",
                    markeredgecolor="black", linestyle="none")
        ax.set_xlim(extent[0], extent[1])
        ax.set_ylim(extent[2], extent[3])
        ax.set_xlabel("du$_0$")
        ax.set_ylabel("dv$_0$")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _to_svg(fig)


def render_profile(traj, title: str | None = None) -> str:
    """u and v over [0, 1] with their maxima marked."""
    x, u, v = traj.x, traj.u, traj.v
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ax.plot(x, u, color="#1f77b4", label="u")
        ax.plot(x, v, color="#d62728", label="v")
        for f, c in ((u, "#1f77b4"), (v, "#d62728")):
            i = int(np.argmax(f))
            ax.plot([x[i]], [f[i]], "o", color=c, markersize=5)
        ax.set_xlim(0.0, 1.0)
        ax.set_xlabel("x")
        ax.legend(loc="upper right")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _to_svg(fig)


def render_bifurcation(branches, lambda_bif: float | None = None) -> str:
    """max v against lambda for each branch; a one-point branch is a marker."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        for br in branches:
            if not len(br.records):
                continue
            color, marker = BRANCH_STYLE.get(br.label, ("black", "^"))
            lam = [r.lam for r in br.records]
            sv = [r.sup_v for r in br.records]
            ax.plot(lam, sv, color=color, marker=marker, markersize=3, label=br.label,
                    linestyle="-" if len(lam) > 1 else "none")
        if lambda_bif is not None:
            ax.axvline(lambda_bif, color="gray", linestyle=":", linewidth=1)
        ax.set_xlabel(r"$\lambda$")
        ax.set_ylabel(r"$\max\, v$")
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="best")
        fig.tight_layout()
        return _to_svg(fig)
