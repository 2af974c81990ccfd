"""Render the five figure kinds from mfelab artifacts.

Rendering is pure: a fixed style, no timestamps, scrubbed metadata, so the
same artifact yields byte-identical image files on every invocation.
"""

from __future__ import annotations

import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .readers import (SchemaError, read_branch_csv, read_diagnostics_json,
                      read_family_csv, read_field_dump)

EIGHT_PI = 8.0 * math.pi

PLOT_KINDS = ("branch", "quantization", "concentration", "family_slope", "heatmap")

_STYLE = {
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "mfe-plot",
}


def _save(fig, path):
    meta = {}
    if str(path).endswith(".png"):
        meta = {"Software": None}
    elif str(path).endswith(".svg"):
        meta = {"Date": None}
    fig.savefig(path, metadata=meta)
    plt.close(fig)


def _render_branch(spec):
    cols = read_branch_csv(spec["input"])
    fig, (ax1, ax2) = plt.subplots(1, 2)
    ax1.plot(cols["lambda"], cols["u_max"], "-o", ms=2.5, lw=1.0, color="#1f6fb4")
    ax1.set_xlabel(r"$\lambda$")
    ax1.set_ylabel(r"$u_{\max}$")
    ax2.plot(cols["lambda"], cols["J"], "-o", ms=2.5, lw=1.0, color="#b44d1f")
    ax2.set_xlabel(r"$\lambda$")
    ax2.set_ylabel(r"$J_\lambda$")
    if spec.get("options", {}).get("refs", True):
        for ax in (ax1, ax2):
            ax.axvline(EIGHT_PI, color="0.4", lw=0.8, ls="--")
    fig.suptitle(spec.get("options", {}).get("title", "solution branch"))
    fig.tight_layout()
    return fig


def _render_quantization(spec):
    cols = read_branch_csv(spec["input"])
    ok = np.isfinite(cols["peak1_m1"])
    if not ok.any():
        raise SchemaError("quantization plot: no finite 'peak1_m1' values in the branch CSV")
    fig, ax = plt.subplots()
    ax.plot(cols["lambda"][ok], cols["peak1_m1"][ok], "-o", ms=3, lw=1.0,
            color="#1f6fb4", label=r"peak mass $m_1$")
    kmax = max(1, int(np.nanmax(cols["peak1_m1"][ok]) // EIGHT_PI) + 1)
    for k in range(1, kmax + 1):
        ax.axhline(k * EIGHT_PI, color="0.35", lw=0.9, ls="--")
        ax.annotate(f"${k}\\cdot 8\\pi$", (ax.get_xlim()[0], k * EIGHT_PI),
                    textcoords="offset points", xytext=(4, 3), fontsize=8)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel("local mass at the dominant peak")
    ax.legend(loc="lower right")
    fig.suptitle(spec.get("options", {}).get("title", "mass quantization"))
    fig.tight_layout()
    return fig


def _render_concentration(spec):
    diag = read_diagnostics_json(spec["input"])
    conc = diag["concentration"]
    fig, ax = plt.subplots()
    ax.plot(conc["radii"], conc["values"], "-o", ms=3, lw=1.0, color="#1f6fb4")
    ax.set_xlabel("r")
    ax.set_ylabel("Q(r)")
    ax.set_ylim(0.0, 1.05)
    ax.axhline(1.0, color="0.35", lw=0.9, ls="--")
    fig.suptitle(spec.get("options", {}).get("title", "concentration function"))
    fig.tight_layout()
    return fig


def _render_family_slope(spec):
    opts = spec.get("options", {})
    if "lambda" not in opts:
        raise SchemaError("family_slope plot: options.lambda is required "
                          "for the theoretical slope annotation")
    lam = float(opts["lambda"])
    cols = read_family_csv(spec["input"])
    t = np.log(1.0 / (1.0 - cols["r"]))
    slope, intercept = np.polyfit(t, cols["J"], 1)
    theory = 2.0 * (EIGHT_PI - lam)
    fig, ax = plt.subplots()
    for th in np.unique(cols["theta"]):
        sel = cols["theta"] == th
        ax.plot(t[sel], cols["J"][sel], "o", ms=3, alpha=0.7)
    tt = np.linspace(t.min(), t.max(), 64)
    ax.plot(tt, slope * tt + intercept, "-", color="0.2", lw=1.2,
            label=f"fit: {slope:+.3f} per unit t")
    ax.set_xlabel(r"$t = \ln\,1/(1-r)$")
    ax.set_ylabel(r"$J_\lambda(h(r,\theta))$")
    ax.annotate(f"fitted slope {slope:+.3f}\ntheory 2(8$\\pi-\\lambda$) = {theory:+.3f}",
                xy=(0.03, 0.05), xycoords="axes fraction", fontsize=9,
                bbox={"boxstyle": "round", "fc": "white", "ec": "0.6"})
    ax.legend(loc="upper right")
    fig.suptitle(spec.get("options", {}).get("title", "test-family slope"))
    fig.tight_layout()
    return fig


def _render_heatmap(spec):
    dump = read_field_dump(spec["input"])
    fig, ax = plt.subplots()
    if dump["ny"] == 1:
        ax.plot(dump["x"], dump["values"], "-", lw=1.2, color="#1f6fb4")
        ax.set_xlabel("r")
        ax.set_ylabel("u")
    else:
        img = np.full((dump["ny"], dump["nx"]), np.nan)
        img[dump["j"], dump["i"]] = dump["values"]
        extent = (dump["x"].min(), dump["x"].max(), dump["y"].min(), dump["y"].max())
        im = ax.imshow(img, origin="lower", extent=extent, cmap="viridis",
                       interpolation="nearest")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    fig.suptitle(spec.get("options", {}).get("title",
                                             f"field ({dump['shape_tag']})"))
    fig.tight_layout()
    return fig


_RENDERERS = {
    "branch": _render_branch,
    "quantization": _render_quantization,
    "concentration": _render_concentration,
    "family_slope": _render_family_slope,
    "heatmap": _render_heatmap,
}


def render(spec: dict) -> str:
    """Render one plot spec: {kind, input, output, options?} -> output path."""
    kind = spec.get("kind")
    if kind not in PLOT_KINDS:
        raise SchemaError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    for key in ("input", "output"):
        if key not in spec:
            raise SchemaError(f"plot spec: missing key '{key}'")
    with plt.rc_context(_STYLE):
        fig = _RENDERERS[kind](spec)
        _save(fig, spec["output"])
    return spec["output"]
