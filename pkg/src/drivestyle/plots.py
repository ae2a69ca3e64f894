"""Small deterministic SVG charts (no plotting library: byte-identical output across runs)."""

from __future__ import annotations

from html import escape

import numpy as np

from .instructions import atomic_write
from .losses import hybrid_total
from .style_filter import FEATURE_NAMES

WIDTH, HEIGHT = 640, 360
MARGIN = {"left": 60, "right": 20, "top": 40, "bottom": 60}
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _f(v):
    return f"{v:.2f}"


def _header(title, stamp):
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<!-- config_hash={stamp.get('config_hash', '')} seed={stamp.get('seed', '')} -->",
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
    ]
    return lines


def _axes(lines, ymin, ymax, ylabel):
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    lines.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    lines.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for k in range(5):
        val = ymin + (ymax - ymin) * k / 4
        y = y0 - (y0 - y1) * k / 4
        lines.append(f'<text x="{x0 - 6}" y="{_f(y + 4)}" text-anchor="end" font-family="sans-serif" font-size="10">{val:.3g}</text>')
    lines.append(
        f'<text x="14" y="{(y0 + y1) / 2:.0f}" transform="rotate(-90 14 {(y0 + y1) / 2:.0f})" '
        f'text-anchor="middle" font-family="sans-serif" font-size="11">{escape(ylabel)}</text>'
    )


def _yscale(ymin, ymax):
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    span = (ymax - ymin) or 1.0
    return lambda v: y0 - (y0 - y1) * (v - ymin) / span


def bar_chart(groups, series, values, title, ylabel, stamp, empty_note="no data"):
    """Grouped bars: ``values[g][s]`` (None entries are skipped)."""
    lines = _header(title, stamp)
    flat = [v for row in values for v in row if v is not None and np.isfinite(v)]
    if not groups or not flat:
        lines.append(
            f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT / 2:.0f}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(empty_note)}</text>'
        )
        lines.append("</svg>")
        return "\n".join(lines) + "\n"
    ymin, ymax = min(0.0, min(flat)), max(0.0, max(flat))
    if ymax == ymin:
        ymax = ymin + 1.0
    _axes(lines, ymin, ymax, ylabel)
    ys = _yscale(ymin, ymax)
    plot_w = WIDTH - MARGIN["left"] - MARGIN["right"]
    gw = plot_w / len(groups)
    bw = gw * 0.8 / max(len(series), 1)
    for gi, g in enumerate(groups):
        gx = MARGIN["left"] + gi * gw + gw * 0.1
        for si, _ in enumerate(series):
            v = values[gi][si]
            if v is None or not np.isfinite(v):
                continue
            top, base = ys(max(v, 0.0)), ys(min(v, 0.0))
            lines.append(
                f'<rect x="{_f(gx + si * bw)}" y="{_f(top)}" width="{_f(bw)}" height="{_f(base - top)}" '
                f'fill="{PALETTE[si % len(PALETTE)]}"/>'
            )
        lines.append(
            f'<text x="{_f(gx + gw * 0.4)}" y="{HEIGHT - MARGIN["bottom"] + 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{escape(str(g))}</text>'
        )
    for si, s in enumerate(series):
        lx = MARGIN["left"] + si * 100
        ly = HEIGHT - 18
        lines.append(f'<rect x="{lx}" y="{ly - 9}" width="10" height="10" fill="{PALETTE[si % len(PALETTE)]}"/>')
        lines.append(f'<text x="{lx + 14}" y="{ly}" font-family="sans-serif" font-size="10">{escape(str(s))}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def line_chart(xs, curves, title, xlabel, ylabel, stamp):
    """``curves`` maps label -> y values over ``xs``."""
    lines = _header(title, stamp)
    allv = np.concatenate([np.asarray(c, dtype=float) for c in curves.values()])
    ymin, ymax = float(allv.min()), float(allv.max())
    if ymax == ymin:
        ymax = ymin + 1.0
    _axes(lines, ymin, ymax, ylabel)
    ys = _yscale(ymin, ymax)
    x0, plot_w = MARGIN["left"], WIDTH - MARGIN["left"] - MARGIN["right"]
    xs = np.asarray(xs, dtype=float)
    xmap = lambda v: x0 + plot_w * (v - xs[0]) / ((xs[-1] - xs[0]) or 1.0)  # noqa: E731
    for ci, (label, ys_vals) in enumerate(curves.items()):
        pts = " ".join(f"{_f(xmap(x))},{_f(ys(y))}" for x, y in zip(xs, ys_vals))
        color = PALETTE[ci % len(PALETTE)]
        lines.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        lines.append(f'<text x="{x0 + 10 + ci * 160}" y="{HEIGHT - 18}" font-family="sans-serif" font-size="10" fill="{color}">{escape(label)}</text>')
    for k in range(5):
        xv = xs[0] + (xs[-1] - xs[0]) * k / 4
        lines.append(
            f'<text x="{_f(xmap(xv))}" y="{HEIGHT - MARGIN["bottom"] + 14}" text-anchor="middle" font-family="sans-serif" font-size="10">{xv:.3g}</text>'
        )
    lines.append(f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 32}" text-anchor="middle" font-family="sans-serif" font-size="11">{escape(xlabel)}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def feature_bars(report, path, stamp):
    """Per-style mean features from a filter report; each feature normalised by its max |value|."""
    styles = sorted(s for s, d in report.get("styles", {}).items() if d.get("mean_features"))
    raw = [[report["styles"][s]["mean_features"][f] for f in FEATURE_NAMES] for s in styles]
    arr = np.asarray(raw, dtype=float).reshape(len(styles), len(FEATURE_NAMES))
    scale = np.max(np.abs(arr), axis=0) if len(styles) else np.ones(len(FEATURE_NAMES))
    scale[scale == 0] = 1.0
    norm = (arr / scale).T.tolist() if len(styles) else []
    svg = bar_chart(list(FEATURE_NAMES) if styles else [], styles, norm, "Retained mean features per style (normalised)", "value / max |value|", stamp)
    atomic_write(path, svg)
    return path


def score_bars(report, path, stamp):
    """Per-style PSR, 1-MR and S_final from a metrics report."""
    styles = sorted(report.get("per_style", {}))
    values = []
    for s in styles:
        d = report["per_style"][s]
        values.append([d.get("psr"), None if d.get("mr") is None else 1.0 - d["mr"], d.get("s_final")])
    svg = bar_chart(styles, ["PSR", "1 - MR", "S_final"], values, "Open-loop scores per style", "score", stamp)
    atomic_write(path, svg)
    return path


def hybrid_slice(path, stamp, l_ce=1.0, l_reg=2.0, n=81):
    """Hybrid objective along each log-variance with the other held at zero."""
    grid = np.linspace(-3.0, 3.0, n)
    ce = [hybrid_total(l_ce, l_reg, s, 0.0)[0] for s in grid]
    reg = [hybrid_total(l_ce, l_reg, 0.0, s)[0] for s in grid]
    svg = line_chart(
        grid,
        {"vary log var (CE)": ce, "vary log var (reg)": reg},
        f"Hybrid loss slice (L_ce={l_ce:g}, L_reg={l_reg:g})",
        "log variance",
        "hybrid loss",
        stamp,
    )
    atomic_write(path, svg)
    return path
