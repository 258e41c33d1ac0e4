"""Minimal self-contained SVG line plots and heatmaps."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=80, right=110, top=40, bottom=60)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


class EmptyFigureError(ValueError):
    pass


def _transform(values, lo, hi, log):
    if log:
        values, lo, hi = np.log10(values), np.log10(lo), np.log10(hi)
    span = hi - lo if hi > lo else 1.0
    return (values - lo) / span


def _ticks(lo, hi, log, n=5):
    if log:
        a, b = int(np.floor(np.log10(lo))), int(np.ceil(np.log10(hi)))
        ticks = [10.0**k for k in range(a, b + 1) if lo <= 10.0**k <= hi]
        return ticks or [lo, hi]
    return list(np.linspace(lo, hi, n))


def _fmt(v):
    return f"{v:.3g}"


def _range(values, log):
    finite = values[np.isfinite(values)]
    if log:
        finite = finite[finite > 0]
    if finite.size == 0:
        raise EmptyFigureError("no finite data to plot")
    lo, hi = float(finite.min()), float(finite.max())
    if lo == hi:
        lo, hi = (lo / 2, hi * 2) if log else (lo - 1, hi + 1)
    return lo, hi


class _Canvas:
    def __init__(self, title):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        ]
        self.x0 = MARGIN["left"]
        self.x1 = WIDTH - MARGIN["right"]
        self.y0 = HEIGHT - MARGIN["bottom"]
        self.y1 = MARGIN["top"]

    def px(self, u):
        return self.x0 + u * (self.x1 - self.x0)

    def py(self, v):
        return self.y0 - v * (self.y0 - self.y1)

    def axes(self, xr, yr, xlog, ylog, xlabel, ylabel):
        self.parts.append(
            f'<rect x="{self.x0}" y="{self.y1}" width="{self.x1 - self.x0}" height="{self.y0 - self.y1}" '
            'fill="none" stroke="black"/>')
        for t in _ticks(*xr, xlog):
            x = self.px(_transform(t, *xr, xlog))
            self.parts.append(f'<line x1="{x:.2f}" y1="{self.y0}" x2="{x:.2f}" y2="{self.y0 + 5}" stroke="black"/>')
            self.parts.append(f'<text x="{x:.2f}" y="{self.y0 + 18}" text-anchor="middle">{_fmt(t)}</text>')
        for t in _ticks(*yr, ylog):
            y = self.py(_transform(t, *yr, ylog))
            self.parts.append(f'<line x1="{self.x0 - 5}" y1="{y:.2f}" x2="{self.x0}" y2="{y:.2f}" stroke="black"/>')
            self.parts.append(f'<text x="{self.x0 - 8}" y="{y + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
        self.parts.append(f'<text x="{(self.x0 + self.x1) / 2}" y="{HEIGHT - 15}" '
                          f'text-anchor="middle">{escape(xlabel)}</text>')
        cy = (self.y0 + self.y1) / 2
        self.parts.append(f'<text x="18" y="{cy}" text-anchor="middle" '
                          f'transform="rotate(-90 18 {cy})">{escape(ylabel)}</text>')

    def render(self):
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def line_plot(series, xlabel="", ylabel="", title="", xlog=False, ylog=False):
    """Render ``series`` (list of ``(label, x, y)``) as an SVG string.

    A series with a single finite point is drawn as a marker.
    """
    cleaned = []
    for label, x, y in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if xlog:
            ok &= x > 0
        if ylog:
            ok &= y > 0
        if ok.any():
            cleaned.append((label, x[ok], y[ok]))
    if not cleaned:
        raise EmptyFigureError("all series are empty or non-finite")
    xr = _range(np.concatenate([c[1] for c in cleaned]), xlog)
    yr = _range(np.concatenate([c[2] for c in cleaned]), ylog)
    canvas = _Canvas(title)
    canvas.axes(xr, yr, xlog, ylog, xlabel, ylabel)
    for k, (label, x, y) in enumerate(cleaned):
        color = COLORS[k % len(COLORS)]
        xs = canvas.px(_transform(x, *xr, xlog))
        ys = canvas.py(_transform(y, *yr, ylog))
        if len(x) == 1:
            canvas.parts.append(f'<circle class="marker" cx="{xs[0]:.2f}" cy="{ys[0]:.2f}" r="4" fill="{color}"/>')
        else:
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))
            canvas.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = canvas.y1 + 16 * (k + 1)
        canvas.parts.append(f'<line x1="{canvas.x1 + 8}" y1="{ly - 4}" x2="{canvas.x1 + 24}" y2="{ly - 4}" '
                            f'stroke="{color}" stroke-width="2"/>')
        canvas.parts.append(f'<text x="{canvas.x1 + 28}" y="{ly}">{escape(str(label))}</text>')
    return canvas.render()


def _color(u):
    # blue -> yellow ramp
    u = float(np.clip(u, 0.0, 1.0))
    r = int(40 + 215 * u)
    g = int(40 + 190 * u)
    b = int(140 - 100 * u)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(x, y, z, xlabel="", ylabel="", title="", xlog=False, ylog=False, zlog=False):
    """Render ``z[i, j]`` at ``(x[i], y[j])`` as one ``<rect class="cell">`` per grid point."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.shape != (len(x), len(y)):
        raise ValueError("z must have shape (len(x), len(y))")
    finite = z[np.isfinite(z) & ((z > 0) if zlog else True)]
    if finite.size == 0:
        raise EmptyFigureError("heatmap has no finite values")
    zlo, zhi = float(finite.min()), float(finite.max())

    def edges(v, log):
        if len(v) == 1:
            return (np.array([v[0] / 2, v[0] * 2]) if log else np.array([v[0] - 0.5, v[0] + 0.5]))
        t = np.log10(v) if log else v
        mid = 0.5 * (t[1:] + t[:-1])
        e = np.concatenate([[t[0] - (mid[0] - t[0])], mid, [t[-1] + (t[-1] - mid[-1])]])
        return 10.0**e if log else e

    xe, ye = edges(x, xlog), edges(y, ylog)
    xr, yr = (xe[0], xe[-1]), (ye[0], ye[-1])
    canvas = _Canvas(title)
    for i in range(len(x)):
        u0, u1 = (canvas.px(_transform(xe[k], *xr, xlog)) for k in (i, i + 1))
        for j in range(len(y)):
            v0, v1 = (canvas.py(_transform(ye[k], *yr, ylog)) for k in (j, j + 1))
            value = z[i, j]
            if np.isfinite(value) and (value > 0 or not zlog):
                frac = _transform(value, zlo, zhi, zlog) if zhi > zlo else 0.5
                fill = _color(frac)
            else:
                fill = "#cccccc"
            canvas.parts.append(
                f'<rect class="cell" x="{u0:.2f}" y="{v1:.2f}" width="{u1 - u0:.2f}" '
                f'height="{v0 - v1:.2f}" fill="{fill}"><title>{_fmt(value)}</title></rect>')
    canvas.axes(xr, yr, xlog, ylog, xlabel, ylabel)
    for k in range(6):
        frac = k / 5
        yy = canvas.py(frac)
        canvas.parts.append(f'<rect x="{canvas.x1 + 15}" y="{yy - (canvas.y0 - canvas.y1) / 5:.2f}" width="15" '
                            f'height="{(canvas.y0 - canvas.y1) / 5:.2f}" fill="{_color(frac)}"/>' if k < 5 else "")
        value = (10 ** (np.log10(zlo) + frac * (np.log10(zhi) - np.log10(zlo))) if zlog
                 else zlo + frac * (zhi - zlo))
        canvas.parts.append(f'<text x="{canvas.x1 + 35}" y="{yy + 4:.2f}">{_fmt(value)}</text>')
    return canvas.render()


def emit_figure(path, svg_text):
    with open(path, "w") as fh:
        fh.write(svg_text)
    return path
