"""Shared plot style: every figure reads its look from here."""

from __future__ import annotations

# series colors, assigned to methods in order of first appearance
PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#8c564b",
    "#e377c2",
)

MARKERS = ("o", "s", "^", "D", "v", "P")

BAND_COLOR = "#1f77b4"
BAND_ALPHA = 0.25
MEAN_COLOR = "#1f77b4"
TRUTH_COLOR = "#333333"

RC_PARAMS = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.6,
    "lines.markersize": 5.0,
    # keep text as text and ids reproducible so repeated renders are byte-equal
    "svg.fonttype": "none",
    "svg.hashsalt": "vecdag-figures",
}

AXIS_LABELS = {
    "error_curve": ("number of nodes", "posterior l2 error"),
    "w2_curve": ("number of nodes", "squared Wasserstein-2 gap"),
    "runtime_curve": ("number of nodes", "runtime (ms)"),
    "posterior_band": ("location", "latent value"),
}
