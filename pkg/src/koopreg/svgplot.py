"""Self-contained SVG emission: quiver overlays, contours, line traces.

No plotting dependency: figures are written as plain SVG text with a
fixed element vocabulary (one line plus one arrowhead polygon per quiver
sample, one path per contour segment chain, one polyline per trace), so
tests can assert on element counts and outputs are byte-stable across
runs.  Nothing here embeds timestamps or randomness.
"""

from __future__ import annotations

import numpy as np

from .dynamics import VectorFieldSamples
from .errors import ShapeError
from .field import NodalField

__all__ = ["quiver_svg", "contour_svg", "trace_svg"]

_W, _H = 720, 640
_PAD = 40.0


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _open_svg(width=_W, height=_H) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]


def _close_and_write(parts: list, path) -> str:
    parts.append("</svg>")
    text = "\n".join(parts)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


class _Frame:
    """Data-to-pixel mapping with a fixed margin, y flipped for SVG."""

    def __init__(self, lo, hi, width=_W, height=_H):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        span = np.where(hi > lo, hi - lo, 1.0)
        self.lo, self.span = lo, span
        self.sx = (width - 2 * _PAD) / span[0]
        self.sy = (height - 2 * _PAD) / span[1]
        self.height = height

    def map(self, xy: np.ndarray) -> np.ndarray:
        px = _PAD + (xy[:, 0] - self.lo[0]) * self.sx
        py = self.height - _PAD - (xy[:, 1] - self.lo[1]) * self.sy
        return np.stack([px, py], axis=1)

    def map_vec(self, v: np.ndarray) -> np.ndarray:
        return np.stack([v[:, 0] * self.sx, -v[:, 1] * self.sy], axis=1)


def quiver_svg(layers, path=None, arrow_scale: float | None = None) -> str:
    """Overlayed arrow plots of 2-D sample sets.

    layers: sequence of (samples, color) pairs sharing one coordinate
    frame; every sample becomes one line and one arrowhead polygon.  A
    common arrow scale is chosen so the longest arrow spans about 1.5
    typical point spacings (or pass arrow_scale in data units per unit
    vector magnitude).
    """
    layers = list(layers)
    if not layers:
        raise ShapeError("quiver needs at least one layer")
    for samples, _ in layers:
        if samples.dim != 2:
            raise ShapeError("quiver plots are 2-D only")
    all_pts = np.vstack([s.points for s, _ in layers])
    lo, hi = all_pts.min(axis=0), all_pts.max(axis=0)
    if arrow_scale is None:
        vmax = max(float(np.abs(s.vectors).max()) for s, _ in layers)
        vmax = vmax if vmax > 0 else 1.0
        n = max(len(s.points) for s, _ in layers)
        typical = float(np.max(hi - lo)) / max(np.sqrt(n), 1.0)
        typical = typical if typical > 0 else 1.0
        arrow_scale = 1.5 * typical / vmax

    frame = _Frame(lo, hi)
    parts = _open_svg()
    for samples, color in layers:
        tail = frame.map(samples.points)
        shaft = frame.map_vec(samples.vectors * arrow_scale)
        tip = tail + shaft
        # arrowhead: small triangle at the tip, aligned with the shaft
        length = np.sqrt(np.einsum("pa,pa->p", shaft, shaft))
        safe = np.where(length > 0, length, 1.0)
        u = shaft / safe[:, None]
        nvec = np.stack([-u[:, 1], u[:, 0]], axis=1)
        head = np.minimum(0.3 * length, 6.0)
        width = 0.5 * head
        base = tip - head[:, None] * u
        left = base + width[:, None] * nvec
        right = base - width[:, None] * nvec
        for i in range(len(tail)):
            parts.append(
                f'<line x1="{_fmt(tail[i, 0])}" y1="{_fmt(tail[i, 1])}" '
                f'x2="{_fmt(base[i, 0])}" y2="{_fmt(base[i, 1])}" '
                f'stroke="{color}" stroke-width="1"/>'
            )
            parts.append(
                f'<polygon points="{_fmt(tip[i, 0])},{_fmt(tip[i, 1])} '
                f'{_fmt(left[i, 0])},{_fmt(left[i, 1])} '
                f'{_fmt(right[i, 0])},{_fmt(right[i, 1])}" fill="{color}"/>'
            )
    return _close_and_write(parts, path)


# Marching squares: per case, the edge pairs a segment crosses.
# Edges: 0 bottom (c00-c10), 1 right (c10-c11), 2 top (c01-c11), 3 left (c00-c01).
_CASES = {
    0: [],
    1: [(3, 0)],
    2: [(0, 1)],
    3: [(3, 1)],
    4: [(1, 2)],
    5: [(3, 2), (0, 1)],
    6: [(0, 2)],
    7: [(3, 2)],
    8: [(2, 3)],
    9: [(2, 0)],
    10: [(0, 3), (1, 2)],
    11: [(1, 2)],
    12: [(1, 3)],
    13: [(0, 1)],
    14: [(3, 0)],
    15: [],
}


def _level_color(k: int, total: int) -> str:
    # simple blue->red ramp, deterministic
    t = 0.5 if total <= 1 else k / (total - 1)
    r = int(round(40 + 200 * t))
    g = 60
    b = int(round(240 - 200 * t))
    return f"rgb({r},{g},{b})"


def contour_svg(field: NodalField, levels: int = 10, path=None) -> str:
    """Marching-squares iso-contours of a 2-D nodal field."""
    if not isinstance(field, NodalField) or field.dim != 2:
        raise ShapeError("contours need a 2-D nodal field")
    if levels < 1:
        raise ShapeError("levels must be at least 1")
    grid = field.grid
    v = np.asarray(field.values, dtype=float)
    vmin, vmax = float(v.min()), float(v.max())
    if vmin == vmax:
        vmax = vmin + 1.0
    iso = np.linspace(vmin, vmax, levels + 2)[1:-1]
    xs = grid.axis_coords(0)
    ys = grid.axis_coords(1)
    frame = _Frame((xs[0], ys[0]), (xs[-1], ys[-1]))
    parts = _open_svg()

    def edge_point(i, j, edge, t):
        # crossing of the iso level t on one cell edge, in data coords
        c00, c10 = v[i, j], v[i + 1, j]
        c01, c11 = v[i, j + 1], v[i + 1, j + 1]
        if edge == 0:
            a, b = c00, c10
            p0, p1 = (xs[i], ys[j]), (xs[i + 1], ys[j])
        elif edge == 1:
            a, b = c10, c11
            p0, p1 = (xs[i + 1], ys[j]), (xs[i + 1], ys[j + 1])
        elif edge == 2:
            a, b = c01, c11
            p0, p1 = (xs[i], ys[j + 1]), (xs[i + 1], ys[j + 1])
        else:
            a, b = c00, c01
            p0, p1 = (xs[i], ys[j]), (xs[i], ys[j + 1])
        frac = 0.5 if b == a else (t - a) / (b - a)
        frac = min(max(frac, 0.0), 1.0)
        return (p0[0] + frac * (p1[0] - p0[0]), p0[1] + frac * (p1[1] - p0[1]))

    for k, t in enumerate(iso):
        color = _level_color(k, len(iso))
        segs = []
        above = v >= t
        for i in range(grid.counts[0] - 1):
            for j in range(grid.counts[1] - 1):
                case = (
                    int(above[i, j])
                    | int(above[i + 1, j]) << 1
                    | int(above[i + 1, j + 1]) << 2
                    | int(above[i, j + 1]) << 3
                )
                for e0, e1 in _CASES[case]:
                    segs.append((edge_point(i, j, e0, t), edge_point(i, j, e1, t)))
        if not segs:
            continue
        pts = frame.map(np.asarray([p for seg in segs for p in seg]))
        d = []
        for s in range(len(segs)):
            a, b = pts[2 * s], pts[2 * s + 1]
            d.append(
                f"M {_fmt(a[0])} {_fmt(a[1])} L {_fmt(b[0])} {_fmt(b[1])}"
            )
        parts.append(
            f'<path d="{" ".join(d)}" stroke="{color}" fill="none" '
            f'stroke-width="1"/>'
        )
    return _close_and_write(parts, path)


def trace_svg(series, path=None, height: int = 360) -> str:
    """Line chart of one or more scalar series over their index."""
    series = list(series)
    if not series:
        raise ShapeError("trace needs at least one series")
    arrays = [(name, np.asarray(y, dtype=float).reshape(-1), c) for name, y, c in series]
    ymin = min(float(y.min()) for _, y, _ in arrays)
    ymax = max(float(y.max()) for _, y, _ in arrays)
    xmax = max(len(y) - 1 for _, y, _ in arrays)
    frame = _Frame((0.0, ymin), (max(xmax, 1), ymax), height=height)
    parts = _open_svg(height=height)
    parts.append(
        f'<rect x="{_fmt(_PAD)}" y="{_fmt(_PAD)}" width="{_fmt(_W - 2 * _PAD)}" '
        f'height="{_fmt(height - 2 * _PAD)}" fill="none" stroke="gray"/>'
    )
    for idx, (name, y, color) in enumerate(arrays):
        xy = np.stack([np.arange(len(y), dtype=float), y], axis=1)
        px = frame.map(xy)
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in px)
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{_fmt(_PAD + 6)}" y="{_fmt(_PAD + 16 + 14 * idx)}" '
            f'fill="{color}" font-size="12" font-family="sans-serif">{name}</text>'
        )
    return _close_and_write(parts, path)
