"""Deterministic SVG output for stability regions and convergence reports."""

from __future__ import annotations

import logging
import math
from typing import Mapping

import numpy as np

from .io import atomic_write_text

log = logging.getLogger(__name__)

WIDTH, HEIGHT, MARGIN = 640, 480, 50
COLOURS = {"explicit": "#cc0000", "alpha": "#000000", "other": "#1f4fbf"}
SERIES = ("#1f4fbf", "#cc0000", "#2a8a2a", "#8a2a8a", "#c77700", "#000000")
DEFAULT_BOUNDS = (-2.2, 0.2, -1.2, 1.2)


def _num(x: float) -> str:
    return f"{x:.3f}"


def _header(width: int, height: int) -> list[str]:
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']


def _vertices(poly) -> np.ndarray:
    if hasattr(poly, "closed"):
        return np.asarray(poly.closed(), dtype=complex)
    return np.asarray(poly, dtype=complex).ravel()


def _beta(poly) -> float | None:
    return getattr(poly, "beta_deg", None)


def region_bounds(polygons) -> tuple[float, float, float, float]:
    """The unit-disk viewport, widened in steps of 0.5 until every vertex fits."""
    x0, x1, y0, y1 = DEFAULT_BOUNDS
    for p in polygons:
        v = _vertices(p)
        if v.size == 0:
            continue
        if v.real.min() < x0:
            x0 = math.floor(2 * (v.real.min() - 0.2)) / 2
        if v.real.max() > x1:
            x1 = math.ceil(2 * (v.real.max() + 0.2)) / 2
        if v.imag.min() < y0:
            y0 = math.floor(2 * (v.imag.min() - 0.2)) / 2
        if v.imag.max() > y1:
            y1 = math.ceil(2 * (v.imag.max() + 0.2)) / 2
    return x0, x1, y0, y1


def render_regions(polygons, alpha_deg: float | None = None, bounds=None,
                   title: str = "") -> str:
    """Nested region contours, largest first.

    ``beta = 0`` (the explicit region) is drawn red, ``beta == alpha_deg``
    black and any other wedge angle blue. Plain vertex arrays are drawn blue.
    """
    polygons = list(polygons)
    if alpha_deg is None:
        betas = [b for b in map(_beta, polygons) if b is not None and b > 0]
        alpha_deg = max(betas) if betas else None
    x0, x1, y0, y1 = region_bounds(polygons) if bounds is None else bounds
    # Equal scaling on both axes.
    scale = min((WIDTH - 2 * MARGIN) / (x1 - x0), (HEIGHT - 2 * MARGIN) / (y1 - y0))

    def px(z):
        return MARGIN + (z.real - x0) * scale, MARGIN + (y1 - z.imag) * scale

    out = _header(WIDTH, HEIGHT)
    ox, oy = px(0j)
    out.append(f'<g stroke="#999999" stroke-width="0.5">'
               f'<line x1="{_num(MARGIN)}" y1="{_num(oy)}" x2="{_num(px(complex(x1, 0))[0])}" y2="{_num(oy)}"/>'
               f'<line x1="{_num(ox)}" y1="{_num(MARGIN)}" x2="{_num(ox)}" y2="{_num(px(complex(0, y0))[1])}"/></g>')
    if title:
        out.append(f'<text x="{MARGIN}" y="{MARGIN - 15}" font-size="14">{title}</text>')

    drawn = []
    for p in polygons:
        v = _vertices(p)
        if v.size < 3:
            log.warning("empty polygon skipped")
            continue
        xs, ys = v.real, v.imag
        area = 0.5 * abs(float(np.sum(xs * np.roll(ys, -1) - np.roll(xs, -1) * ys)))
        drawn.append((area, p, v))
    if not drawn:
        log.warning("no polygons to draw; writing axes only")
    drawn.sort(key=lambda item: -item[0])
    for _, p, v in drawn:
        b = _beta(p)
        if b is not None and b <= 0:
            colour = COLOURS["explicit"]
        elif b is not None and alpha_deg is not None and abs(b - alpha_deg) < 1e-9:
            colour = COLOURS["alpha"]
        else:
            colour = COLOURS["other"]
        pts = [px(z) for z in v]
        d = "M " + " L ".join(f"{_num(a)} {_num(c)}" for a, c in pts) + " Z"
        label = "" if b is None else f' data-beta="{b:g}"'
        out.append(f'<path d="{d}" fill="none" stroke="{colour}" stroke-width="1.2"{label}/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _log_ticks(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1))


def render_report(report, orders: Mapping[str, int] | None = None, title: str = "") -> str:
    """Log-log error versus step size with one slope guide per method order.

    ``orders`` maps method labels to their order ``s``; each distinct order
    gets a dashed segment of slope ``s`` anchored at the smallest error.
    """
    rows = [r for r in report.rows if np.isfinite(r.error) and r.error > 0]
    out = _header(WIDTH, HEIGHT)
    if title:
        out.append(f'<text x="{MARGIN}" y="{MARGIN - 15}" font-size="14">{title}</text>')
    if not rows:
        log.warning("report has no finite errors; writing axes only")
        dts, errs = np.array([1e-3, 1e-1]), np.array([1e-8, 1e-2])
    else:
        dts = np.array([r.dt for r in rows])
        errs = np.array([r.error for r in rows])
    ex0, ex1 = _log_ticks(dts.min(), dts.max())[0], _log_ticks(dts.min(), dts.max())[-1]
    ey0, ey1 = _log_ticks(errs.min(), errs.max())[0], _log_ticks(errs.min(), errs.max())[-1]
    ex1, ey1 = max(ex1, ex0 + 1), max(ey1, ey0 + 1)
    w, h = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(dt, err):
        return (MARGIN + (math.log10(dt) - ex0) / (ex1 - ex0) * w,
                MARGIN + (ey1 - math.log10(err)) / (ey1 - ey0) * h)

    out.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{w}" height="{h}" fill="none" stroke="#000000"/>')
    for e in range(ex0, ex1 + 1):
        x, _ = px(10.0**e, 10.0**ey0)
        out.append(f'<text x="{_num(x)}" y="{HEIGHT - MARGIN + 16}" font-size="10" '
                   f'text-anchor="middle">1e{e}</text>')
    for e in range(ey0, ey1 + 1):
        _, y = px(10.0**ex0, 10.0**e)
        out.append(f'<text x="{MARGIN - 6}" y="{_num(y)}" font-size="10" text-anchor="end">1e{e}</text>')

    labels = list(dict.fromkeys(r.method for r in report.rows))
    for k, label in enumerate(labels):
        pts = [px(r.dt, r.error) for r in rows if r.method == label]
        colour = SERIES[k % len(SERIES)]
        if pts:
            d = "M " + " L ".join(f"{_num(a)} {_num(b)}" for a, b in pts)
            out.append(f'<path d="{d}" fill="none" stroke="{colour}" stroke-width="1.2" '
                       f'data-method="{label}"/>')
            for a, b in pts:
                out.append(f'<circle cx="{_num(a)}" cy="{_num(b)}" r="2.5" fill="{colour}"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 110}" y="{MARGIN + 15 + 14 * k}" font-size="11" '
                   f'fill="{colour}">{label}</text>')

    if rows and orders:
        dmin, dmax = dts.min(), dts.max()
        e_anchor = errs.min()
        for s in sorted(set(int(v) for v in orders.values())):
            a, b = px(dmin, e_anchor)
            e_end = e_anchor * (dmax / dmin) ** s
            c, d = px(dmax, e_end)
            out.append(f'<line class="slope-guide" data-slope="{s}" x1="{_num(a)}" y1="{_num(b)}" '
                       f'x2="{_num(c)}" y2="{_num(d)}" stroke="#777777" stroke-dasharray="4 3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(obj, path=None, **kwargs) -> str:
    """Render polygons (any iterable of regions) or a convergence report; write to ``path`` if given."""
    if hasattr(obj, "rows"):
        text = render_report(obj, **kwargs)
    else:
        polys = [obj] if hasattr(obj, "vertices") else list(obj)
        if polys and not hasattr(polys[0], "vertices") and np.ndim(polys[0]) == 0:
            polys = [polys]
        text = render_regions(polys, **kwargs)
    if path is not None:
        atomic_write_text(path, text)
    return text
