"""Scalar fields over N-dimensional rectangular domains.

Two interchangeable parametrizations are provided:

* :class:`NodalField` -- values stored at the nodes of a rectangular
  lattice (:class:`GridSpec`).  Differentiation is discrete: central
  differences at interior nodes and first-order one-sided differences on
  the boundary, so the gradient of an affine field is exact everywhere.
* :class:`SmoothBasisField` -- coefficients over a smooth basis (tensor
  Chebyshev polynomials on a box, or Gaussian RBFs), with analytic
  gradients defined at every point of the domain.

Quadrature follows one convention project-wide: a plain node sum times
the cell volume (``integrate``).  Fields are immutable after
construction; every operation here is pure.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from .errors import DomainError, ShapeError

__all__ = [
    "GridSpec",
    "Point",
    "ScalarField",
    "NodalField",
    "SmoothBasisField",
    "TensorPolynomialBasis",
    "GaussianRBFBasis",
    "GradientField",
    "gradient",
    "integrate",
    "interpolate",
    "axis_difference",
    "axis_difference_adjoint",
    "infer_grid",
    "bounding_box_volume",
    "field_to_json",
    "field_from_json",
    "nodal_to_csv",
    "nodal_from_csv",
]

_BOX_RTOL = 1e-9
_BOX_ATOL = 1e-9


def as_point(p) -> np.ndarray:
    """Validate a state vector: 1-D, finite entries."""
    x = np.asarray(p, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ShapeError(f"point has non-finite entries: {x}")
    return x


#: Alias kept for API clarity; a point is a plain 1-D float array.
Point = np.ndarray


# Grid ------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Rectangular sampling lattice: per-axis origin, spacing, node count."""

    mins: tuple
    spacing: tuple
    counts: tuple

    def __post_init__(self):
        mins = tuple(float(v) for v in self.mins)
        spacing = tuple(float(v) for v in self.spacing)
        counts = tuple(int(v) for v in self.counts)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "counts", counts)
        if not (len(mins) == len(spacing) == len(counts)) or len(mins) == 0:
            raise ShapeError("mins, spacing, counts must share a positive length")
        if any(c < 2 for c in counts):
            raise ShapeError(f"every axis needs at least 2 nodes, got {counts}")
        if any(h <= 0 or not math.isfinite(h) for h in spacing):
            raise ShapeError(f"spacing must be positive and finite, got {spacing}")
        if not all(math.isfinite(v) for v in mins):
            raise ShapeError(f"mins must be finite, got {mins}")

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def maxs(self) -> tuple:
        return tuple(
            m + (c - 1) * h for m, h, c in zip(self.mins, self.spacing, self.counts)
        )

    @property
    def box_volume(self) -> float:
        return float(
            np.prod([(c - 1) * h for h, c in zip(self.spacing, self.counts)])
        )

    @classmethod
    def from_box(cls, mins, maxs, dx) -> "GridSpec":
        """Lattice covering [mins, maxs] with spacing dx (scalar or per-axis)."""
        mins = [float(v) for v in mins]
        maxs = [float(v) for v in maxs]
        if np.isscalar(dx):
            dx = [float(dx)] * len(mins)
        counts = [int(round((hi - lo) / h)) + 1 for lo, hi, h in zip(mins, maxs, dx)]
        return cls(mins=tuple(mins), spacing=tuple(dx), counts=tuple(counts))

    def axis_coords(self, ax: int) -> np.ndarray:
        return self.mins[ax] + self.spacing[ax] * np.arange(self.counts[ax])

    def nodes(self) -> np.ndarray:
        """All lattice points, shape (node_count, dim), row-major (x1 slowest)."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the bounding box (with tolerance)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.mins)
        hi = np.asarray(self.maxs)
        tol = _BOX_ATOL + _BOX_RTOL * np.maximum(np.abs(lo), np.abs(hi))
        return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)

    def index_of(self, points: np.ndarray) -> np.ndarray:
        """Flat node indices of lattice points; DomainError if any is off-grid."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ShapeError(f"points have dim {pts.shape[1]}, grid has {self.dim}")
        h = np.asarray(self.spacing)
        t = (pts - np.asarray(self.mins)) / h
        idx = np.rint(t).astype(int)
        off = np.abs(t - idx) > 1e-6
        oob = (idx < 0) | (idx >= np.asarray(self.counts))
        bad = np.any(off | oob, axis=1)
        if np.any(bad):
            p = pts[np.argmax(bad)]
            raise DomainError(f"point {tuple(p)} is not a node of the lattice")
        return np.ravel_multi_index(idx.T, self.counts)

    def to_json_dict(self) -> dict:
        return {
            "mins": list(self.mins),
            "spacing": list(self.spacing),
            "counts": list(self.counts),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GridSpec":
        return cls(
            mins=tuple(d["mins"]),
            spacing=tuple(d["spacing"]),
            counts=tuple(d["counts"]),
        )


def infer_grid(points: np.ndarray) -> GridSpec | None:
    """Recover the lattice behind a point set, or None if it is scattered.

    Points must be the full lattice in row-major node order with exactly
    repeating axis coordinates (as produced by lattice sampling and by the
    CSV round trip, which preserves floats bit-for-bit).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n, dim = pts.shape
    axes = []
    for a in range(dim):
        vals = np.unique(pts[:, a])
        if len(vals) < 2:
            return None
        diffs = np.diff(vals)
        if not np.allclose(diffs, diffs[0], rtol=1e-9, atol=1e-12):
            return None
        axes.append(vals)
    counts = tuple(len(v) for v in axes)
    if int(np.prod(counts)) != n:
        return None
    grid = GridSpec(
        mins=tuple(v[0] for v in axes),
        spacing=tuple(float(np.mean(np.diff(v))) for v in axes),
        counts=counts,
    )
    if not np.allclose(grid.nodes(), pts, rtol=1e-9, atol=1e-12):
        return None
    return grid


def bounding_box_volume(points: np.ndarray) -> float:
    """Volume of the axis-aligned bounding box; zero extents count as 1."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    extents = pts.max(axis=0) - pts.min(axis=0)
    extents = np.where(extents > 0, extents, 1.0)
    return float(np.prod(extents))


# Discrete differentiation ----------------------------------------------------


def _axslice(nd: int, ax: int, s) -> tuple:
    out = [slice(None)] * nd
    out[ax] = s
    return tuple(out)


def axis_difference(values: np.ndarray, ax: int, h: float) -> np.ndarray:
    """First derivative along one axis: central interior, one-sided boundary."""
    v = np.asarray(values)
    nd = v.ndim
    if v.shape[ax] < 2:
        raise ShapeError("axis needs at least 2 nodes for differencing")
    d = np.empty_like(v)
    d[_axslice(nd, ax, slice(1, -1))] = (
        v[_axslice(nd, ax, slice(2, None))] - v[_axslice(nd, ax, slice(None, -2))]
    ) / (2.0 * h)
    d[_axslice(nd, ax, slice(0, 1))] = (
        v[_axslice(nd, ax, slice(1, 2))] - v[_axslice(nd, ax, slice(0, 1))]
    ) / h
    d[_axslice(nd, ax, slice(-1, None))] = (
        v[_axslice(nd, ax, slice(-1, None))] - v[_axslice(nd, ax, slice(-2, -1))]
    ) / h
    return d


def axis_difference_adjoint(cot: np.ndarray, ax: int, h: float) -> np.ndarray:
    """Transpose of :func:`axis_difference` as a linear map on nodal values."""
    g = np.asarray(cot)
    nd = g.ndim
    out = np.zeros_like(g)
    mid = g[_axslice(nd, ax, slice(1, -1))] / (2.0 * h)
    out[_axslice(nd, ax, slice(2, None))] += mid
    out[_axslice(nd, ax, slice(None, -2))] -= mid
    first = g[_axslice(nd, ax, slice(0, 1))] / h
    out[_axslice(nd, ax, slice(1, 2))] += first
    out[_axslice(nd, ax, slice(0, 1))] -= first
    last = g[_axslice(nd, ax, slice(-1, None))] / h
    out[_axslice(nd, ax, slice(-1, None))] += last
    out[_axslice(nd, ax, slice(-2, -1))] -= last
    return out


# Smooth bases -----------------------------------------------------------------


def _tensor_columns(mats: list) -> np.ndarray:
    out = mats[0]
    for m in mats[1:]:
        out = (out[:, :, None] * m[:, None, :]).reshape(out.shape[0], -1)
    return out


class TensorPolynomialBasis:
    """Tensor products of Chebyshev polynomials on a normalization box.

    Coordinates are mapped to [-1, 1] per axis before evaluation, which
    keeps design matrices well conditioned regardless of where the domain
    sits in state space.
    """

    kind = "tensor_poly"

    def __init__(self, mins, maxs, degree: int):
        self.mins = np.asarray([float(v) for v in mins])
        self.maxs = np.asarray([float(v) for v in maxs])
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise ShapeError("mins and maxs must be 1-D and of equal length")
        if degree < 0:
            raise ShapeError("degree must be non-negative")
        self.degree = int(degree)
        self._center = 0.5 * (self.mins + self.maxs)
        half = 0.5 * (self.maxs - self.mins)
        self._half = np.where(half > 0, half, 1.0)

    @property
    def dim(self) -> int:
        return len(self._center)

    @property
    def size(self) -> int:
        return (self.degree + 1) ** self.dim

    def _normalized(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self._center) / self._half

    def _vander_pair(self, u: np.ndarray):
        deg = self.degree
        v = _cheb.chebvander(u, deg)
        dv = np.zeros_like(v)
        for k in range(1, deg + 1):
            c = np.zeros(k + 1)
            c[k] = 1.0
            dv[:, k] = _cheb.chebval(u, _cheb.chebder(c))
        return v, dv

    def design_matrices(self, points: np.ndarray):
        """Value matrix B and per-axis derivative matrices G (w.r.t. x)."""
        u = self._normalized(np.asarray(points, dtype=float))
        if u.shape[1] != self.dim:
            raise ShapeError(f"points have dim {u.shape[1]}, basis has {self.dim}")
        pairs = [self._vander_pair(u[:, a]) for a in range(self.dim)]
        value = _tensor_columns([p[0] for p in pairs])
        grads = []
        for a in range(self.dim):
            mats = [pairs[i][1] if i == a else pairs[i][0] for i in range(self.dim)]
            grads.append(_tensor_columns(mats) / self._half[a])
        return value, grads

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tol = _BOX_ATOL + _BOX_RTOL * np.maximum(np.abs(self.mins), np.abs(self.maxs))
        return np.all((pts >= self.mins - tol) & (pts <= self.maxs + tol), axis=1)

    def fit(self, points: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Least-squares coefficients reproducing the values at the points."""
        b, _ = self.design_matrices(points)
        coeffs, *_ = np.linalg.lstsq(b, np.asarray(values, dtype=float), rcond=None)
        return coeffs

    def reference_points(self, per_axis: int = 8) -> np.ndarray:
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(self.mins, self.maxs)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
            "degree": self.degree,
        }


class GaussianRBFBasis:
    """Gaussian radial basis functions with fixed centers and shared width."""

    kind = "gaussian_rbf"

    def __init__(self, centers, width: float):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.width = float(width)
        if self.width <= 0:
            raise ShapeError("RBF width must be positive")

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    def design_matrices(self, points: np.ndarray):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ShapeError(f"points have dim {pts.shape[1]}, basis has {self.dim}")
        diff = pts[:, None, :] - self.centers[None, :, :]
        sq = np.sum(diff * diff, axis=2)
        value = np.exp(-sq / (2.0 * self.width**2))
        grads = [
            value * (-diff[:, :, a] / self.width**2) for a in range(self.dim)
        ]
        return value, grads

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.ones(len(pts), dtype=bool)

    def fit(self, points: np.ndarray, values: np.ndarray) -> np.ndarray:
        b, _ = self.design_matrices(points)
        coeffs, *_ = np.linalg.lstsq(b, np.asarray(values, dtype=float), rcond=None)
        return coeffs

    def reference_points(self, per_axis: int = 8) -> np.ndarray:
        return self.centers.copy()

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "centers": self.centers.tolist(),
            "width": self.width,
        }


def basis_from_json_dict(d: dict):
    if d["kind"] == TensorPolynomialBasis.kind:
        return TensorPolynomialBasis(d["mins"], d["maxs"], d["degree"])
    if d["kind"] == GaussianRBFBasis.kind:
        return GaussianRBFBasis(d["centers"], d["width"])
    raise ShapeError(f"unknown basis kind {d['kind']!r}")


# Fields -----------------------------------------------------------------------


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, copy=True)
    out.flags.writeable = False
    return out


class ScalarField:
    """Common surface of the two field parametrizations."""

    dim: int

    @property
    def params(self) -> np.ndarray:
        raise NotImplementedError

    def with_params(self, params: np.ndarray) -> "ScalarField":
        raise NotImplementedError

    def values_at(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient_at(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class NodalField(ScalarField):
    """Scalar field as one value per lattice node."""

    def __init__(self, grid: GridSpec, values):
        self.grid = grid
        v = np.asarray(values)
        if v.size != grid.node_count:
            raise ShapeError(
                f"{v.size} values for a grid of {grid.node_count} nodes"
            )
        if not np.all(np.isfinite(v)):
            raise ShapeError("nodal values must be finite")
        self.values = _freeze(v.reshape(grid.counts))

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def params(self) -> np.ndarray:
        return self.values.reshape(-1)

    def with_params(self, params: np.ndarray) -> "NodalField":
        return NodalField(self.grid, np.asarray(params))

    def values_at(self, points: np.ndarray) -> np.ndarray:
        idx = self.grid.index_of(points)
        return self.values.reshape(-1)[idx]

    def gradient_grid(self) -> list:
        """Per-axis derivative arrays on the full grid (grid-shaped)."""
        return [
            axis_difference(self.values, a, self.grid.spacing[a])
            for a in range(self.dim)
        ]

    def gradient_at(self, points: np.ndarray) -> np.ndarray:
        idx = self.grid.index_of(points)
        grads = self.gradient_grid()
        return np.stack([g.reshape(-1)[idx] for g in grads], axis=1)


class SmoothBasisField(ScalarField):
    """Scalar field as coefficients over a smooth basis."""

    def __init__(self, basis, coeffs):
        c = np.asarray(coeffs, dtype=float).reshape(-1)
        if c.size != basis.size:
            raise ShapeError(f"{c.size} coefficients for a basis of size {basis.size}")
        if not np.all(np.isfinite(c)):
            raise ShapeError("coefficients must be finite")
        self.basis = basis
        self.coeffs = _freeze(c)

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def params(self) -> np.ndarray:
        return self.coeffs

    def with_params(self, params: np.ndarray) -> "SmoothBasisField":
        return SmoothBasisField(self.basis, np.asarray(params))

    def values_at(self, points: np.ndarray) -> np.ndarray:
        b, _ = self.basis.design_matrices(points)
        return b @ self.coeffs

    def gradient_at(self, points: np.ndarray) -> np.ndarray:
        _, grads = self.basis.design_matrices(points)
        return np.stack([g @ self.coeffs for g in grads], axis=1)


@dataclass(frozen=True)
class GradientField:
    """Per-point gradient vectors of a scalar field."""

    points: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        if self.points.shape != self.vectors.shape:
            raise ShapeError("points and vectors must have matching shapes")


# Operations --------------------------------------------------------------------


def gradient(field: ScalarField, at=None) -> GradientField:
    """Gradient of a field at grid nodes or at explicit points.

    Nodal fields are differentiated on their own lattice (``at`` may be
    omitted, the field's grid, or a list of lattice points); smooth-basis
    fields are differentiated analytically anywhere in the domain.
    """
    if isinstance(field, NodalField):
        if at is None or (isinstance(at, GridSpec) and at == field.grid):
            pts = field.grid.nodes()
            grads = field.gradient_grid()
            vec = np.stack([g.reshape(-1) for g in grads], axis=1)
            return GradientField(points=pts, vectors=vec)
        if isinstance(at, GridSpec):
            raise DomainError("nodal fields are differentiated on their own grid")
        pts = np.atleast_2d(np.asarray(at, dtype=float))
        return GradientField(points=pts, vectors=field.gradient_at(pts))
    if isinstance(field, SmoothBasisField):
        if at is None:
            raise ShapeError("smooth-basis gradient needs evaluation points")
        pts = at.nodes() if isinstance(at, GridSpec) else np.atleast_2d(
            np.asarray(at, dtype=float)
        )
        inside = field.basis.contains(pts)
        if not np.all(inside):
            p = pts[np.argmin(inside)]
            raise DomainError(f"point {tuple(p)} is outside the basis domain box")
        return GradientField(points=pts, vectors=field.gradient_at(pts))
    raise ShapeError(f"unsupported field type {type(field).__name__}")


def integrate(values: np.ndarray, grid: GridSpec) -> float:
    """Node-weighted Riemann sum: sum of values times the cell volume."""
    v = np.asarray(values).reshape(-1)
    if v.size != grid.node_count:
        raise ShapeError(f"{v.size} values for a grid of {grid.node_count} nodes")
    return float(np.sum(v) * grid.cell_volume)


def _multilinear(field: NodalField, pts: np.ndarray) -> np.ndarray:
    grid = field.grid
    inside = grid.contains(pts)
    if not np.all(inside):
        p = pts[np.argmin(inside)]
        raise DomainError(f"point {tuple(p)} is outside the domain box")
    t = (pts - np.asarray(grid.mins)) / np.asarray(grid.spacing)
    base = np.clip(np.floor(t).astype(int), 0, np.asarray(grid.counts) - 2)
    frac = np.clip(t - base, 0.0, 1.0)
    acc = np.zeros(len(pts))
    for corner in np.ndindex(*(2,) * grid.dim):
        idx = base + np.asarray(corner)
        w = np.prod(
            np.where(np.asarray(corner, dtype=bool), frac, 1.0 - frac), axis=1
        )
        acc += w * field.values[tuple(idx.T)]
    return acc


def interpolate(field: ScalarField, p) -> float:
    """Field value at an arbitrary domain point.

    Multilinear interpolation for nodal fields, exact evaluation for
    smooth-basis fields.
    """
    pt = np.atleast_2d(as_point(p))
    if isinstance(field, NodalField):
        return float(_multilinear(field, pt)[0])
    if isinstance(field, SmoothBasisField):
        if not bool(field.basis.contains(pt)[0]):
            raise DomainError(f"point {tuple(pt[0])} is outside the domain box")
        return float(field.values_at(pt)[0])
    raise ShapeError(f"unsupported field type {type(field).__name__}")


# Serialization ------------------------------------------------------------------


def field_to_json(field: ScalarField) -> str:
    if isinstance(field, NodalField):
        if np.iscomplexobj(field.values):
            raise ShapeError("complex nodal fields are not serializable")
        d = {
            "kind": "nodal",
            "grid": field.grid.to_json_dict(),
            "values": field.values.reshape(-1).tolist(),
        }
    elif isinstance(field, SmoothBasisField):
        d = {"basis": field.basis.to_json_dict(), "coeffs": field.coeffs.tolist()}
        d["kind"] = d["basis"]["kind"]
    else:
        raise ShapeError(f"unsupported field type {type(field).__name__}")
    return json.dumps(d)


def field_from_json(text: str) -> ScalarField:
    d = json.loads(text)
    if d["kind"] == "nodal":
        return NodalField(GridSpec.from_json_dict(d["grid"]), np.asarray(d["values"]))
    return SmoothBasisField(basis_from_json_dict(d["basis"]), np.asarray(d["coeffs"]))


def nodal_to_csv(field: NodalField, path) -> None:
    """Write `x1,...,xN,value` rows in row-major node order."""
    if np.iscomplexobj(field.values):
        raise ShapeError("complex nodal fields are not serializable")
    pts = field.grid.nodes()
    vals = field.values.reshape(-1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(field.dim)] + ["value"])
        for p, v in zip(pts, vals):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])


def nodal_from_csv(path) -> NodalField:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    dim = len(header) - 1
    data = np.asarray([[float(c) for c in row] for row in body])
    if data.shape[1] != dim + 1:
        raise ShapeError("csv rows do not match the header")
    grid = infer_grid(data[:, :dim])
    if grid is None:
        raise DomainError(f"{path}: points do not form a full lattice")
    return NodalField(grid, data[:, dim])
