"""Minimal deterministic SVG charts: line plots with error bands, and histograms."""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 70, "right": 20, "top": 40, "bottom": 55}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _tick(x: float) -> str:
    return f"{x:.4g}"


class _Frame:
    def __init__(self, xlim, ylim):
        x0, x1 = xlim
        y0, y1 = ylim
        if x1 <= x0:
            x0, x1 = x0 - 0.5, x0 + 0.5
        if y1 <= y0:
            y0, y1 = y0 - 0.5, y0 + 0.5
        pad = 0.05 * (y1 - y0)
        self.xlim, self.ylim = (x0, x1), (y0 - pad, y1 + pad)
        self.w = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def x(self, v):
        return MARGIN["left"] + (v - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * self.w

    def y(self, v):
        return MARGIN["top"] + (self.ylim[1] - v) / (self.ylim[1] - self.ylim[0]) * self.h

    def axes(self, title, xlabel, ylabel) -> list:
        left, top = MARGIN["left"], MARGIN["top"]
        bottom = top + self.h
        parts = [
            f'<rect x="{left}" y="{top}" width="{self.w}" height="{self.h}" fill="none" stroke="#333"/>',
            f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
            f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
            f'<text x="16" y="{top + self.h / 2}" text-anchor="middle" font-size="13" '
            f'transform="rotate(-90 16 {top + self.h / 2})">{escape(ylabel)}</text>',
        ]
        for v in np.linspace(*self.xlim, 6):
            px = _fmt(self.x(v))
            parts.append(f'<line x1="{px}" y1="{bottom}" x2="{px}" y2="{bottom + 5}" stroke="#333"/>')
            parts.append(f'<text x="{px}" y="{bottom + 18}" text-anchor="middle" font-size="11">{_tick(v)}</text>')
        for v in np.linspace(*self.ylim, 6):
            py = _fmt(self.y(v))
            parts.append(f'<line x1="{left - 5}" y1="{py}" x2="{left}" y2="{py}" stroke="#333"/>')
            parts.append(f'<text x="{left - 8}" y="{py}" text-anchor="end" dominant-baseline="middle" '
                         f'font-size="11">{_tick(v)}</text>')
        return parts


def _document(parts) -> str:
    body = "\n".join(parts)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">\n'
            f'<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n')


def line_plot(x, series: dict, title: str, xlabel: str, ylabel: str, band: Optional[dict] = None,
              marker: Optional[float] = None) -> str:
    """Lines named by ``series`` keys; ``band`` maps a key to a half-width array; ``marker`` draws a vertical rule."""
    x = np.asarray(x, dtype=float)
    band = band or {}
    lows, highs = [], []
    for key, ys in series.items():
        ys = np.asarray(ys, dtype=float)
        half = np.asarray(band.get(key, 0.0), dtype=float)
        lows.append(np.nanmin(ys - half))
        highs.append(np.nanmax(ys + half))
    frame = _Frame((x.min(), x.max()), (min(lows), max(highs)))
    parts = frame.axes(title, xlabel, ylabel)
    for i, (key, ys) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        ys = np.asarray(ys, dtype=float)
        ok = np.isfinite(ys)
        if key in band:
            half = np.asarray(band[key], dtype=float) * np.ones_like(ys)
            ok &= np.isfinite(half)
            upper = [f"{_fmt(frame.x(a))},{_fmt(frame.y(b))}" for a, b in zip(x[ok], ys[ok] + half[ok])]
            lower = [f"{_fmt(frame.x(a))},{_fmt(frame.y(b))}" for a, b in zip(x[ok], ys[ok] - half[ok])]
            parts.append(f'<polygon points="{" ".join(upper + lower[::-1])}" fill="{color}" fill-opacity="0.2" '
                         f'stroke="none"/>')
        points = " ".join(f"{_fmt(frame.x(a))},{_fmt(frame.y(b))}" for a, b in zip(x[ok], ys[ok]))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{WIDTH - MARGIN["right"] - 8}" y="{MARGIN["top"] + 16 + 16 * i}" text-anchor="end" '
                     f'font-size="12" fill="{color}">{escape(key)}</text>')
    if marker is not None:
        px = _fmt(frame.x(marker))
        parts.append(f'<line x1="{px}" y1="{MARGIN["top"]}" x2="{px}" y2="{MARGIN["top"] + frame.h}" '
                     f'stroke="#555" stroke-dasharray="5,4"/>')
    return _document(parts)


def histogram(values: Sequence[float], title: str, xlabel: str, bins=20) -> str:
    """Histogram of finite ``values``; ``bins`` is a count or explicit edges."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        values = np.zeros(1)
    counts, edges = np.histogram(values, bins=bins)
    frame = _Frame((edges[0], edges[-1]), (0.0, float(counts.max())))
    parts = frame.axes(title, xlabel, "count")
    base = frame.y(0.0)
    for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
        top = frame.y(c)
        parts.append(f'<rect x="{_fmt(frame.x(lo))}" y="{_fmt(top)}" width="{_fmt(frame.x(hi) - frame.x(lo))}" '
                     f'height="{_fmt(base - top)}" fill="{COLORS[0]}" stroke="white"/>')
    return _document(parts)


def write_svg(path, content: str) -> Path:
    path = Path(path)
    path.write_text(content)
    return path
