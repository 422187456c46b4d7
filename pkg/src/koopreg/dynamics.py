"""Built-in dynamical systems, vector-field sampling, noise, and orbits.

The systems are three families: linear ``x' = A x`` for an arbitrary
square matrix, a planar limit cycle, and the Lorenz system.  The stock
2-D experiments use four named instances over the box [6,12] x [-3,3]
(see :func:`system_by_name`); the matrices carry small prefactors that
keep all four fields at a comparable magnitude.

Sampling produces :class:`VectorFieldSamples`, the one container the
rest of the library consumes: points, vectors, and an optional lattice
layout when the points form a full grid.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import DivergenceError, ShapeError
from .field import GridSpec, as_point, bounding_box_volume, infer_grid

__all__ = [
    "LinearSystem",
    "LimitCycle2D",
    "LorenzSystem",
    "system_by_name",
    "SYSTEM_NAMES",
    "VectorFieldSamples",
    "NoiseSpec",
    "sample_grid",
    "sample_points",
    "add_noise",
    "integrate_orbit",
    "extract_segment",
    "planar_window",
]


class LinearSystem:
    """x' = A x for a square matrix A."""

    def __init__(self, matrix):
        a = np.asarray(matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"linear system matrix must be square, got {a.shape}")
        self.matrix = a

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eval(self, x) -> np.ndarray:
        p = as_point(x)
        if p.size != self.dim:
            raise ShapeError(f"point has dim {p.size}, system has {self.dim}")
        return self.matrix @ p

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ShapeError(f"points have dim {pts.shape[1]}, system has {self.dim}")
        return pts @ self.matrix.T


class LimitCycle2D:
    """Planar Hopf-type oscillator attracting to the unit circle.

    x1' = scale * (-x2 + x1 (1 - x1^2 - x2^2))
    x2' = scale * ( x1 + x2 (1 - x1^2 - x2^2))
    """

    def __init__(self, scale: float = 1e-3):
        self.scale = float(scale)

    dim = 2

    def eval(self, x) -> np.ndarray:
        p = as_point(x)
        if p.size != 2:
            raise ShapeError(f"point has dim {p.size}, system has 2")
        return self.eval_many(p[None, :])[0]

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != 2:
            raise ShapeError(f"points have dim {pts.shape[1]}, system has 2")
        x1, x2 = pts[:, 0], pts[:, 1]
        r = 1.0 - x1 * x1 - x2 * x2
        return self.scale * np.stack([-x2 + x1 * r, x1 + x2 * r], axis=1)


class LorenzSystem:
    """The Lorenz system with the classical chaotic parameters by default."""

    def __init__(self, sigma: float = 10.0, beta: float = 8.0 / 3.0, rho: float = 28.0):
        self.sigma = float(sigma)
        self.beta = float(beta)
        self.rho = float(rho)

    dim = 3

    def eval(self, x) -> np.ndarray:
        p = as_point(x)
        if p.size != 3:
            raise ShapeError(f"point has dim {p.size}, system has 3")
        return self.eval_many(p[None, :])[0]

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != 3:
            raise ShapeError(f"points have dim {pts.shape[1]}, system has 3")
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        return np.stack(
            [self.sigma * (y - x), self.rho * x - y - x * z, x * y - self.beta * z],
            axis=1,
        )


# The four stock 2-D fields share one magnitude scale by construction.
_STOCK = {
    "lin-real": lambda: LinearSystem(np.array([[11.0, -5.0], [-5.0, 11.0]]) / 200.0),
    "lin-complex": lambda: LinearSystem(
        np.array([[-0.4, 0.1], [-0.4, -0.5]]) / 10.0
    ),
    "lin-imaginary": lambda: LinearSystem(np.array([[0.0, 1.0], [-1.0, 0.0]]) / 10.0),
    "nonlinear": lambda: LimitCycle2D(),
    "lorenz": lambda: LorenzSystem(),
}

SYSTEM_NAMES = tuple(sorted(_STOCK))


def system_by_name(name: str, **params):
    """Instantiate a built-in system; keyword overrides reach the constructor."""
    if name not in _STOCK:
        raise ShapeError(
            f"unknown system {name!r}; choose one of {', '.join(SYSTEM_NAMES)}"
        )
    if not params:
        return _STOCK[name]()
    if name == "nonlinear":
        return LimitCycle2D(**params)
    if name == "lorenz":
        return LorenzSystem(**params)
    raise ShapeError(f"system {name!r} takes no parameters")


# Samples ----------------------------------------------------------------------


@dataclass(frozen=True)
class VectorFieldSamples:
    """P(x) sampled at a point set, with the lattice layout when one exists."""

    points: np.ndarray
    vectors: np.ndarray
    layout: GridSpec | None = dataclass_field(default=None)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vec = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if pts.shape != vec.shape:
            raise ShapeError(
                f"points {pts.shape} and vectors {vec.shape} must match"
            )
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(vec))):
            raise ShapeError("samples must be finite")
        if self.layout is not None and self.layout.node_count != len(pts):
            raise ShapeError("layout node count does not match the sample count")
        pts = pts.copy()
        vec = vec.copy()
        pts.flags.writeable = False
        vec.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "vectors", vec)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def quadrature_weight(self) -> float:
        """Per-point weight: cell volume on a lattice, box volume / count off it."""
        if self.layout is not None:
            return self.layout.cell_volume
        return bounding_box_volume(self.points) / self.count

    def with_vectors(self, vectors: np.ndarray) -> "VectorFieldSamples":
        return VectorFieldSamples(self.points, np.asarray(vectors), self.layout)

    def to_csv(self, path) -> None:
        n = self.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                [f"x{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]
            )
            for p, v in zip(self.points, self.vectors):
                w.writerow([repr(float(c)) for c in p] + [repr(float(c)) for c in v])

    @classmethod
    def from_csv(cls, path) -> "VectorFieldSamples":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ShapeError(f"{path}: empty csv")
        header, body = rows[0], rows[1:]
        if len(header) % 2 != 0:
            raise ShapeError(f"{path}: expected x1..xN,p1..pN columns")
        n = len(header) // 2
        data = np.asarray([[float(c) for c in row] for row in body])
        if data.ndim != 2 or data.shape[1] != 2 * n:
            raise ShapeError(f"{path}: rows do not match the header")
        pts = data[:, :n]
        return cls(points=pts, vectors=data[:, n:], layout=infer_grid(pts))

    def to_json(self) -> str:
        return json.dumps(
            {
                "dim": self.dim,
                "points": self.points.tolist(),
                "vectors": self.vectors.tolist(),
                "layout": None if self.layout is None else self.layout.to_json_dict(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "VectorFieldSamples":
        d = json.loads(text)
        layout = (
            None if d.get("layout") is None else GridSpec.from_json_dict(d["layout"])
        )
        return cls(
            points=np.asarray(d["points"]),
            vectors=np.asarray(d["vectors"]),
            layout=layout,
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise, reproducible from the seed.

    Draws come from numpy's PCG64 generator (default_rng) through its
    standard normal transform, so a given (seed, shape) pair yields the
    same noise on every platform and run.
    """

    std: float = 0.1
    mean: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.std < 0:
            raise ShapeError("noise std must be non-negative")


def sample_grid(system, grid: GridSpec) -> VectorFieldSamples:
    """Evaluate the system at every lattice node, row-major order."""
    if grid.dim != system.dim:
        raise ShapeError(f"grid dim {grid.dim} does not match system dim {system.dim}")
    pts = grid.nodes()
    return VectorFieldSamples(points=pts, vectors=system.eval_many(pts), layout=grid)


def sample_points(system, points: np.ndarray) -> VectorFieldSamples:
    """Evaluate the system at scattered points (no layout)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return VectorFieldSamples(points=pts, vectors=system.eval_many(pts), layout=None)


def add_noise(samples: VectorFieldSamples, spec: NoiseSpec) -> VectorFieldSamples:
    """Add independent Gaussian draws to every vector component."""
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(spec.mean, spec.std, size=samples.vectors.shape)
    return samples.with_vectors(samples.vectors + noise)


# Orbits -----------------------------------------------------------------------


def integrate_orbit(system, x0, dt: float, steps: int) -> np.ndarray:
    """Classical RK4 trajectory of length steps+1, starting at x0."""
    if dt <= 0:
        raise ShapeError("dt must be positive")
    if steps < 1:
        raise ShapeError("steps must be at least 1")
    x = as_point(x0)
    out = np.empty((steps + 1, x.size))
    out[0] = x
    for k in range(steps):
        k1 = system.eval(x)
        k2 = system.eval(x + 0.5 * dt * k1)
        k3 = system.eval(x + 0.5 * dt * k2)
        k4 = system.eval(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(step=k + 1)
        out[k + 1] = x
    return out


def extract_segment(
    system, trajectory: np.ndarray, start: int, end: int
) -> VectorFieldSamples:
    """Scattered samples over trajectory[start:end] with exact field values."""
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    if not (0 <= start < end <= len(traj)):
        raise ShapeError(
            f"window [{start}, {end}) out of range for {len(traj)} states"
        )
    return sample_points(system, traj[start:end])


def planar_window(trajectory: np.ndarray, length: int = 300):
    """Most nearly planar window of the trajectory.

    Scans every contiguous window of the given length and returns
    (start, end, ratio) minimizing the PCA planarity ratio: third over
    first singular value of the centered window states.
    """
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    n, dim = traj.shape
    if length < dim + 1 or length > n:
        raise ShapeError(f"window length {length} out of range for {n} states")
    # Prefix sums give every window's scatter matrix in one vectorized pass.
    s1 = np.zeros((n + 1, dim))
    s2 = np.zeros((n + 1, dim, dim))
    np.cumsum(traj, axis=0, out=s1[1:])
    np.cumsum(traj[:, :, None] * traj[:, None, :], axis=0, out=s2[1:])
    starts = np.arange(n - length + 1)
    sum1 = s1[starts + length] - s1[starts]
    sum2 = s2[starts + length] - s2[starts]
    scatter = sum2 - sum1[:, :, None] * sum1[:, None, :] / length
    ev = np.linalg.eigvalsh(scatter)
    smallest = np.sqrt(np.maximum(ev[:, 0], 0.0))
    largest = np.sqrt(np.maximum(ev[:, -1], 1e-300))
    ratios = smallest / largest
    best = int(np.argmin(ratios))
    return best, best + length, float(ratios[best])
