"""Render figures from schema-v1 experiment CSVs.

This package computes no statistics: every number plotted comes straight
from the CSV columns, the only transforms are axis scalings.  Rendering is
deterministic -- fixed style, fixed hash salt, no timestamps in metadata --
so re-rendering the same inputs reproduces the image bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SCHEMA_LINE = "# schema=v1"

FIGURE_KINDS = ("timeseries", "alpha_decay", "kb_convergence", "exceedance", "moll_gap")

plt.rcParams["svg.hashsalt"] = "sdns-plots"


class PlotError(ValueError):
    pass


@dataclass
class FigureSpec:
    kind: str
    inputs: tuple
    out: str
    title: str = ""
    dpi: int = 120
    columns: tuple = ()

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise PlotError(
                f"unknown figure kind {self.kind!r}; choose from {FIGURE_KINDS}"
            )
        if isinstance(self.inputs, str):
            self.inputs = (self.inputs,)
        if not self.inputs:
            raise PlotError("no input CSV given")


class Table:
    """One parsed CSV: named float/string columns."""

    def __init__(self, header, rows):
        self.header = header
        self.rows = rows

    def column(self, name, numeric=True):
        if name not in self.header:
            raise PlotError(f"input is missing the column {name!r}")
        i = self.header.index(name)
        vals = [r[i] for r in self.rows]
        if not numeric:
            return vals
        return np.array([float(v) for v in vals])


def read_table(path) -> Table:
    try:
        fh = open(path)
    except OSError as exc:
        raise PlotError(f"cannot read {path}: {exc}") from None
    with fh:
        first = fh.readline().strip()
        if first != SCHEMA_LINE:
            raise PlotError(
                f"{path}: schema mismatch: expected {SCHEMA_LINE!r}, got {first!r}"
            )
        header_line = fh.readline().strip()
        if not header_line:
            raise PlotError(f"{path}: empty input, no header row")
        header = header_line.split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows:
        raise PlotError(f"{path}: empty input, no data rows")
    return Table(header, rows)


# -- figure builders (one per kind) -------------------------------------------


def _fig_timeseries(spec, tables):
    t = tables[0]
    time = t.column("time")
    fig, ax = plt.subplots(figsize=(7, 4))
    names = spec.columns or ("norm_H", "norm_L4", "z_L4")
    for name in names:
        ax.plot(time, t.column(name), label=name, linewidth=1.0)
    ax.set_xlabel("time")
    ax.set_ylabel("observable")
    ax.legend(loc="best")
    return fig


def _fig_alpha_decay(spec, tables):
    t = tables[0]
    alpha = t.column("alpha")
    mean = t.column("mean_sq_H")
    se = t.column("se_sq_H")
    fig, ax = plt.subplots(figsize=(6, 4))
    # log-log axes; the alpha = 0 point rides on the shifted abscissa.
    ax.errorbar(1.0 + alpha, mean, yerr=se, marker="o", capsize=3, linewidth=1.0)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("1 + extra damping")
    ax.set_ylabel("mean squared energy of the damped convolution")
    return fig


def _fig_kb_convergence(spec, tables):
    t = tables[0]
    names = t.column("observable", numeric=False)
    horizon = t.column("horizon")
    mean = t.column("mean")
    se = t.column("se")
    gap = t.column("gap_mean")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for name in sorted(set(names)):
        sel = np.array([n == name for n in names])
        order = np.argsort(horizon[sel])
        h = horizon[sel][order]
        ax1.errorbar(h, mean[sel][order], yerr=se[sel][order], marker="o",
                     capsize=3, linewidth=1.0, label=name)
        g = gap[sel][order]
        ax2.plot(h[g > 0], g[g > 0], marker="s", linewidth=1.0, label=name)
    ax1.set_xscale("log")
    ax1.set_xlabel("horizon")
    ax1.set_ylabel("running average")
    ax1.legend(loc="best", fontsize=8)
    ax2.set_xscale("log")
    ax2.set_yscale("log")
    ax2.set_xlabel("horizon")
    ax2.set_ylabel("doubling gap")
    return fig


def _fig_exceedance(spec, tables):
    t = tables[0]
    R = t.column("R")
    horizon = t.column("horizon")
    mean = t.column("fraction_mean")
    se = t.column("fraction_se")
    fig, ax = plt.subplots(figsize=(6, 4))
    for T in sorted(set(horizon.tolist())):
        sel = horizon == T
        order = np.argsort(R[sel])
        ax.errorbar(R[sel][order], mean[sel][order], yerr=se[sel][order],
                    marker="o", capsize=3, linewidth=1.0, label=f"T = {T:g}")
    ax.set_xlabel("radius R")
    ax.set_ylabel("time fraction above R")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="best")
    return fig


def _fig_moll_gap(spec, tables):
    t = tables[0]
    names = t.column("observable", numeric=False)
    m = t.column("m")
    gap = t.column("gap_prev_mean")
    se = t.column("gap_prev_se")
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(set(names)):
        sel = np.array([n == name for n in names]) & (gap > 0)
        if not np.any(sel):
            continue
        order = np.argsort(m[sel])
        ax.errorbar(m[sel][order], gap[sel][order], yerr=se[sel][order],
                    marker="o", capsize=3, linewidth=1.0, label=name)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("mollifier width m")
    ax.set_ylabel("average gap to previous m")
    ax.legend(loc="best", fontsize=8)
    return fig


_BUILDERS = {
    "timeseries": _fig_timeseries,
    "alpha_decay": _fig_alpha_decay,
    "kb_convergence": _fig_kb_convergence,
    "exceedance": _fig_exceedance,
    "moll_gap": _fig_moll_gap,
}


def build_figure(spec: FigureSpec):
    """Parse inputs and assemble the matplotlib figure (not yet saved)."""
    tables = [read_table(p) for p in spec.inputs]
    fig = _BUILDERS[spec.kind](spec, tables)
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> str:
    """Write the figure to spec.out; returns the path written."""
    fig = build_figure(spec)
    try:
        # Strip volatile metadata so identical inputs give identical bytes.
        if spec.out.endswith(".svg"):
            fig.savefig(spec.out, dpi=spec.dpi, metadata={"Date": None})
        elif spec.out.endswith(".png"):
            fig.savefig(spec.out, dpi=spec.dpi, metadata={"Software": None})
        else:
            fig.savefig(spec.out, dpi=spec.dpi)
    finally:
        plt.close(fig)
    return spec.out
