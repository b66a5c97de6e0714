"""SVG rendering of surface heatmaps, significance markers, curve overlays.

Output is text SVG with a fixed hash salt and no embedded creation date, so
rerendering the same inputs reproduces the file byte for byte. Significance
is encoded twice: color (green positive, cyan negative) and marker fill
(filled positive, hollow negative), keeping monochrome diffs readable.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import Surface

HASH_SALT = "wombler"
POSITIVE_COLOR = "green"
NEGATIVE_COLOR = "cyan"


def render_heatmap(
    path,
    surface: Surface,
    *,
    sig_points: tuple[np.ndarray, np.ndarray] | None = None,
    curves: list[np.ndarray] | None = None,
    label: str | None = None,
    title: str | None = None,
) -> None:
    """Write an SVG heatmap of the surface.

    sig_points is an optional ((k, 2) locations, (k,) flags) pair; locations
    with flag +1 are drawn as filled green circles, -1 as hollow cyan circles,
    0 are not drawn. curves is an optional list of (p, 2) polylines overlaid
    in black.
    """
    spec = surface.grid
    with plt.rc_context({"svg.hashsalt": HASH_SALT}):
        fig, ax = plt.subplots(figsize=(7.2, 5.8))
        shown = np.where(surface.missing, np.nan, surface.values)
        img = ax.imshow(
            shown.T,
            origin="lower",
            extent=(spec.xmin, spec.xmax, spec.ymin, spec.ymax),
            aspect="equal",
            cmap="viridis",
            interpolation="nearest",
        )
        fig.colorbar(img, ax=ax, label=label or "")
        if sig_points is not None:
            pts, sig = sig_points
            pts = np.asarray(pts, dtype=float)
            sig = np.asarray(sig)
            pos = sig > 0
            neg = sig < 0
            if pos.any():
                ax.scatter(
                    pts[pos, 0],
                    pts[pos, 1],
                    s=22,
                    marker="o",
                    color=POSITIVE_COLOR,
                    zorder=3,
                )
            if neg.any():
                ax.scatter(
                    pts[neg, 0],
                    pts[neg, 1],
                    s=22,
                    marker="o",
                    facecolors="none",
                    edgecolors=NEGATIVE_COLOR,
                    zorder=3,
                )
        for curve in curves or []:
            curve = np.asarray(curve, dtype=float)
            ax.plot(curve[:, 0], curve[:, 1], color="black", linewidth=1.4, zorder=4)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        if title:
            ax.set_title(title)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
