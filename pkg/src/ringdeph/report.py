"""Plot-ready exports: CSV tables and small hand-written SVG figures.

SVG output is built from plain strings so that identical inputs give
byte-identical files.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .sensitivity import ErrorSurface, SensitivityRecord

SCATTER_COLUMNS = ["controller_id", "objective", "N", "in", "out", "nominal_error", "s_a", "s_k",
                   "s_k_abs", "log10_e", "log10_s_a", "log10_s_k", "orthogonal_pair"]

_W, _H = 640, 480
_M = dict(left=80, right=20, top=30, bottom=60)


def _fmt(v: float) -> str:
    return repr(float(v))


def _log10(v: float) -> float:
    return math.log10(v) if v > 0 else float("nan")


def decade_ticks(lo: float, hi: float) -> list[int]:
    """Integer decade exponents covering ``[lo, hi]`` (values, not logs)."""
    a = math.floor(math.log10(lo))
    b = math.ceil(math.log10(hi))
    if a == b:
        a, b = a - 1, b + 1
    return list(range(a, b + 1))


class _Axes:
    def __init__(self, xdec: Sequence[int], ydec: Sequence[int]):
        self.x0, self.x1 = xdec[0], xdec[-1]
        self.y0, self.y1 = ydec[0], ydec[-1]
        self.pw = _W - _M["left"] - _M["right"]
        self.ph = _H - _M["top"] - _M["bottom"]

    def px(self, lx: float) -> float:
        return _M["left"] + (lx - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, ly: float) -> float:
        return _M["top"] + (1 - (ly - self.y0) / (self.y1 - self.y0)) * self.ph


def _svg_open(title: str) -> list[str]:
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
            f'<rect width="{_W}" height="{_H}" fill="white"/>',
            f'<text x="{_W / 2:.1f}" y="18" text-anchor="middle">{title}</text>']


def _log_axes(ax: _Axes, xdec, ydec, xlabel: str, ylabel: str) -> list[str]:
    out = [f'<rect x="{_M["left"]}" y="{_M["top"]}" width="{ax.pw}" height="{ax.ph}" '
           f'fill="none" stroke="black"/>']
    for d in xdec:
        x = ax.px(d)
        out.append(f'<line class="xtick" x1="{x:.2f}" y1="{_M["top"] + ax.ph}" x2="{x:.2f}" '
                   f'y2="{_M["top"] + ax.ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{_M["top"] + ax.ph + 18}" text-anchor="middle">1e{d}</text>')
    for d in ydec:
        y = ax.py(d)
        out.append(f'<line class="ytick" x1="{_M["left"] - 5}" y1="{y:.2f}" x2="{_M["left"]}" '
                   f'y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{_M["left"] - 8}" y="{y + 4:.2f}" text-anchor="end">1e{d}</text>')
    out.append(f'<text x="{_M["left"] + ax.pw / 2:.1f}" y="{_H - 15}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="18" y="{_M["top"] + ax.ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {_M["top"] + ax.ph / 2:.1f})">{ylabel}</text>')
    return out


def write_scatter_csv(records: Sequence[SensitivityRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCATTER_COLUMNS)
        for r in records:
            N, i, o = r.transfer
            w.writerow([r.controller_id, r.objective, N, i, o, _fmt(r.nominal_error), _fmt(r.s_a),
                        _fmt(r.s_k), _fmt(abs(r.s_k)), _fmt(_log10(r.nominal_error)),
                        _fmt(_log10(r.s_a)), _fmt(_log10(abs(r.s_k))),
                        "" if r.orthogonal_pair is None else int(r.orthogonal_pair)])


def read_scatter_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def scatter_svg(records: Sequence[SensitivityRecord], title: str = "") -> str:
    """Log-log plot of sensitivity against nominal error.

    ``s_a`` is drawn as blue crosses for orthogonal-pair controllers and red
    boxes otherwise; ``|s_k|`` is overlaid as small grey dots.
    """
    pts = [r for r in records if r.nominal_error > 0 and r.s_a > 0]
    if not pts:
        raise ValueError("no records with positive error and sensitivity to plot")
    e = [r.nominal_error for r in pts]
    s = [r.s_a for r in pts] + [abs(r.s_k) for r in pts if r.s_k != 0]
    xdec, ydec = decade_ticks(min(e), max(e)), decade_ticks(min(s), max(s))
    ax = _Axes(xdec, ydec)
    out = _svg_open(title)
    out += _log_axes(ax, xdec, ydec, "nominal error e(T)", "log-sensitivity")
    for r in pts:
        x, y = ax.px(_log10(r.nominal_error)), ax.py(_log10(r.s_a))
        if r.orthogonal_pair:
            out.append(f'<path class="orthogonal" d="M{x - 4:.2f},{y - 4:.2f}L{x + 4:.2f},{y + 4:.2f}'
                       f'M{x - 4:.2f},{y + 4:.2f}L{x + 4:.2f},{y - 4:.2f}" stroke="blue" fill="none"/>')
        else:
            out.append(f'<rect class="non-orthogonal" x="{x - 4:.2f}" y="{y - 4:.2f}" width="8" '
                       f'height="8" stroke="red" fill="none"/>')
        if r.s_k != 0:
            out.append(f'<circle class="s_k" cx="{x:.2f}" cy="{ax.py(_log10(abs(r.s_k))):.2f}" '
                       f'r="1.5" fill="grey"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_scatter(records: Sequence[SensitivityRecord], path, fmt: str | None = None,
                   title: str = "") -> Path:
    """Write the sensitivity-vs-error scatter as CSV or SVG (chosen by suffix)."""
    if not records:
        raise ValueError("no records to export")
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    if fmt == "csv":
        write_scatter_csv(records, path)
    elif fmt == "svg":
        path.write_text(scatter_svg(records, title))
    else:
        raise ValueError(f"unsupported scatter format {fmt!r}")
    return path


def _heat_color(v: float) -> str:
    # white -> dark blue
    v = min(max(v, 0.0), 1.0)
    r = int(round(255 * (1 - v)))
    g = int(round(255 * (1 - 0.8 * v)))
    return f"#{r:02x}{g:02x}ff"


def export_heatmap(surface: ErrorSurface, densities: tuple[np.ndarray, np.ndarray], path,
                   columns: Sequence[int] | None = None, fmt: str | None = None,
                   title: str = "") -> Path:
    """Error density over ``δ`` with mean and mean ± std overlay series.

    ``densities`` is ``(error_grid, density)`` as returned by
    :func:`ringdeph.sensitivity.error_density`; ``columns`` gives the ``δ``
    column index of each density row (all columns when omitted).
    """
    grid, dens = densities
    cols = list(range(surface.deltas.size)) if columns is None else list(columns)
    if len(cols) != dens.shape[0]:
        raise ValueError("density rows do not match the requested columns")
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    mean, std = surface.mean, surface.std
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["delta", "mean", "std"] + [f"e={_fmt(g)}" for g in grid])
            for row, j in enumerate(cols):
                w.writerow([_fmt(surface.deltas[j]), _fmt(mean[j]), _fmt(std[j])]
                           + [_fmt(v) for v in dens[row]])
        return path
    if fmt != "svg":
        raise ValueError(f"unsupported heatmap format {fmt!r}")

    pw = _W - _M["left"] - _M["right"]
    ph = _H - _M["top"] - _M["bottom"]
    d0, d1 = surface.deltas[0], surface.deltas[-1]
    g0, g1 = grid[0], grid[-1]

    def px(d):
        return _M["left"] + (d - d0) / (d1 - d0) * pw

    def py(e):
        return _M["top"] + (1 - (e - g0) / (g1 - g0)) * ph

    out = _svg_open(title)
    cw = pw / len(cols)
    bh = ph / len(grid)
    for row, j in enumerate(cols):
        peak = dens[row].max()
        if peak <= 0:
            continue
        for b in np.flatnonzero(dens[row] > 1e-3 * peak):
            out.append(f'<rect x="{_M["left"] + row * cw:.2f}" y="{_M["top"] + (len(grid) - 1 - b) * bh:.2f}" '
                       f'width="{cw + 0.05:.2f}" height="{bh + 0.05:.2f}" '
                       f'fill="{_heat_color(dens[row, b] / peak)}"/>')
    for name, series, dash in (("mean", mean, ""), ("mean+std", mean + std, ' stroke-dasharray="4 3"'),
                               ("mean-std", mean - std, ' stroke-dasharray="4 3"')):
        pts = " ".join(f"{px(surface.deltas[j]):.2f},{py(series[j]):.2f}" for j in cols)
        out.append(f'<polyline class="{name}" points="{pts}" fill="none" stroke="green"{dash}/>')
    out.append(f'<rect x="{_M["left"]}" y="{_M["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for k in range(6):
        d = d0 + k * (d1 - d0) / 5
        out.append(f'<text x="{px(d):.2f}" y="{_M["top"] + ph + 18}" text-anchor="middle">{d:.2f}</text>')
        e = g0 + k * (g1 - g0) / 5
        out.append(f'<text x="{_M["left"] - 8}" y="{py(e) + 4:.2f}" text-anchor="end">{e:.3g}</text>')
    out.append(f'<text x="{_M["left"] + pw / 2:.1f}" y="{_H - 15}" text-anchor="middle">dephasing strength δ</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")
    return path
