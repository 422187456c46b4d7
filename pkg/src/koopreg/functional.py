"""Discrete loss terms for learning unit velocity measurements.

Three addends over a measurement set m = (m_1, ..., m_K):

* term A (fidelity): 1/2 sum_i integral (grad m_i . P - 1)^2, the
  unit-speed residual against the sampled field, weighted by the penalty
  multiplier alpha in the total.
* term B (geometric reliability): 1/2 sum_{i<j} integral cos^2 theta_ij
  between measurement gradients; zero iff the gradients are mutually
  orthogonal.
* term C (sparse reconstruction): 1/2 integral ||P - sum_i beta_i grad
  m_i||^2, used in dimensionality-reduction mode with coefficient
  fields beta.

An optional Dirichlet smoothness term S regularizes nodal fields away
from the data (generalization); it is zero by default and the invariant
total = alpha*A + B + C holds whenever S is off.

Integrals are node sums times a per-point quadrature weight: the cell
volume when the points form a lattice, the bounding-box volume over the
point count otherwise.  Fidelity (A, C) is evaluated at the data points;
geometry (B, S) over the full field grid (nodal) or a caller-chosen
geometry point set (smooth bases).

:class:`LossAssembly` precomputes the per-point design so that repeated
loss and gradient evaluations during optimization are plain matrix
arithmetic on one flat parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import VectorFieldSamples
from .errors import DomainError, NonFiniteLossError, ShapeError
from .field import (
    GridSpec,
    NodalField,
    ScalarField,
    SmoothBasisField,
    axis_difference,
    axis_difference_adjoint,
    bounding_box_volume,
)

__all__ = [
    "EpsilonPolicy",
    "LossBreakdown",
    "MeasurementSet",
    "CoefficientFields",
    "LossAssembly",
    "term_A",
    "term_B",
    "term_C",
    "total_loss",
    "MODES",
]

MODES = ("standard", "dr")


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ShapeError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


@dataclass(frozen=True)
class EpsilonPolicy:
    """Guard added inside gradient-norm denominators of term B."""

    eps: float = 1e-8

    def __post_init__(self):
        if not self.eps > 0:
            raise ShapeError("eps must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    """One evaluation of the total loss, split by addend."""

    termA: float
    termB: float
    termC: float
    termS: float
    alpha: float
    total: float

    def __post_init__(self):
        vals = (self.termA, self.termB, self.termC, self.termS, self.total)
        if not all(np.isfinite(v) for v in vals):
            raise ShapeError(f"loss breakdown has non-finite entries: {vals}")

    def to_json_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "termA": self.termA,
            "termB": self.termB,
            "termC": self.termC,
            "termS": self.termS,
            "total": self.total,
        }


class _FieldSet:
    """Shared validation for a tuple of scalar fields over one domain."""

    def __init__(self, fields):
        fields = tuple(fields)
        if len(fields) == 0:
            raise ShapeError("need at least one field")
        first = fields[0]
        if isinstance(first, NodalField):
            for f in fields:
                if not isinstance(f, NodalField) or f.grid != first.grid:
                    raise ShapeError("fields must share one representation and grid")
        elif isinstance(first, SmoothBasisField):
            key = first.basis.to_json_dict()
            for f in fields:
                if not isinstance(f, SmoothBasisField) or f.basis.to_json_dict() != key:
                    raise ShapeError("fields must share one representation and basis")
        else:
            raise ShapeError(f"unsupported field type {type(first).__name__}")
        self.fields = fields

    @property
    def count(self) -> int:
        return len(self.fields)

    @property
    def dim(self) -> int:
        return self.fields[0].dim

    @property
    def is_nodal(self) -> bool:
        return isinstance(self.fields[0], NodalField)

    def __iter__(self):
        return iter(self.fields)

    def __getitem__(self, i):
        return self.fields[i]

    def params_concat(self) -> np.ndarray:
        return np.concatenate([f.params for f in self.fields])

    def with_params_concat(self, params: np.ndarray):
        sizes = [f.params.size for f in self.fields]
        if np.asarray(params).size != sum(sizes):
            raise ShapeError("parameter vector does not match the field set")
        out, at = [], 0
        for f, s in zip(self.fields, sizes):
            out.append(f.with_params(np.asarray(params)[at : at + s]))
            at += s
        return type(self)(out)


class MeasurementSet(_FieldSet):
    """K candidate unit velocity measurements, K <= N, one shared domain."""

    def __init__(self, fields):
        super().__init__(fields)
        if self.count > self.dim:
            raise ShapeError(
                f"{self.count} measurements exceed the state dimension {self.dim}"
            )

    def gradients_at(self, points: np.ndarray) -> np.ndarray:
        """Stacked gradients, shape (K, npoints, N)."""
        return np.stack([f.gradient_at(points) for f in self.fields])


class CoefficientFields(_FieldSet):
    """The beta_i(x) coefficient fields of the sparse-reconstruction term."""


# Assembly -----------------------------------------------------------------------


class _NodalPlan:
    """Design data for nodal fields: stencils on the grid, data-node indices."""

    def __init__(self, grid: GridSpec, data_points):
        self.grid = grid
        self.n_geom = grid.node_count
        self.geom_points = grid.nodes()
        self.data_idx = None if data_points is None else grid.index_of(data_points)

    def grad_flat(self, values_flat: np.ndarray) -> np.ndarray:
        """(n_nodes, N) gradient of one field given its flat nodal values."""
        v = values_flat.reshape(self.grid.counts)
        cols = [
            axis_difference(v, a, self.grid.spacing[a]).reshape(-1)
            for a in range(self.grid.dim)
        ]
        return np.stack(cols, axis=1)

    def grad_adjoint(self, cot: np.ndarray) -> np.ndarray:
        """Pull an (n_nodes, N) gradient cotangent back onto nodal values."""
        out = np.zeros(self.grid.node_count)
        for a in range(self.grid.dim):
            out += axis_difference_adjoint(
                cot[:, a].reshape(self.grid.counts), a, self.grid.spacing[a]
            ).reshape(-1)
        return out


class _BasisPlan:
    """Design matrices for smooth-basis fields at data and geometry points."""

    def __init__(self, basis, data_points, geom_points):
        self.basis = basis
        self.geom_points = geom_points
        self.value_geom, self.grad_geom = basis.design_matrices(geom_points)
        if data_points is None:
            self.value_data, self.grad_data = None, None
        else:
            inside = basis.contains(data_points)
            if not np.all(inside):
                p = np.atleast_2d(data_points)[np.argmin(inside)]
                raise DomainError(f"data point {tuple(p)} outside the basis domain")
            self.value_data, self.grad_data = basis.design_matrices(data_points)

    @property
    def n_geom(self) -> int:
        return self.value_geom.shape[0]


class LossAssembly:
    """Precomputed loss/gradient evaluator over a flat parameter vector.

    The parameter vector is the concatenation of every measurement
    field's parameters followed by every coefficient field's parameters
    (DR mode).  ``loss`` and ``loss_and_grad`` are pure functions of that
    vector, so optimizers and finite-difference oracles see exactly the
    same objective.
    """

    def __init__(
        self,
        mset: MeasurementSet,
        data: VectorFieldSamples | None,
        *,
        betas: CoefficientFields | None = None,
        mode: str = "standard",
        eps: EpsilonPolicy = EpsilonPolicy(),
        smoothness_weight: float = 0.0,
        geometry=None,
    ):
        self.mode = _check_mode(mode)
        if self.mode == "dr" and betas is None:
            raise ShapeError("dr mode requires coefficient fields")
        if self.mode == "dr" and data is None:
            raise ShapeError("dr mode requires data samples")
        if betas is not None and betas.count != mset.count:
            raise ShapeError(
                f"{betas.count} coefficient fields for {mset.count} measurements"
            )
        if data is not None and data.dim != mset.dim:
            raise ShapeError(f"data dim {data.dim} does not match fields {mset.dim}")
        self.mset = mset
        self.betas = betas if self.mode == "dr" else None
        self.eps = float(eps.eps)
        self.smoothness_weight = float(smoothness_weight)
        self.k = mset.count
        self.dim = mset.dim

        pts = None if data is None else data.points
        if mset.is_nodal:
            grid = mset[0].grid
            if geometry is not None and not (
                isinstance(geometry, GridSpec) and geometry == grid
            ):
                raise ShapeError("nodal fields fix geometry to their own grid")
            self.plan = _NodalPlan(grid, pts)
            self.w_geom = grid.cell_volume
        else:
            geom = self._resolve_geometry(geometry, data, mset[0].basis)
            self.plan = _BasisPlan(mset[0].basis, pts, geom)
            if isinstance(geometry, GridSpec):
                self.w_geom = geometry.cell_volume
            else:
                n = len(self.plan.geom_points)
                self.w_geom = bounding_box_volume(self.plan.geom_points) / n

        self.data = data
        self.w_data = None if data is None else data.quadrature_weight
        self.vectors = None if data is None else data.vectors
        self._mask = self._offdata_mask()
        self._m_sizes = [f.params.size for f in mset.fields]
        self._b_sizes = [] if self.betas is None else [
            f.params.size for f in self.betas.fields
        ]

    @staticmethod
    def _resolve_geometry(geometry, data, basis):
        if geometry is None:
            if data is not None:
                return np.asarray(data.points)
            return basis.reference_points()
        if isinstance(geometry, GridSpec):
            return geometry.nodes()
        return np.atleast_2d(np.asarray(geometry, dtype=float))

    def _offdata_mask(self) -> np.ndarray | None:
        if self.smoothness_weight <= 0:
            return None
        mask = np.ones(self.plan.n_geom)
        if self.data is None:
            return mask
        if isinstance(self.plan, _NodalPlan):
            mask[self.plan.data_idx] = 0.0
            return mask
        # Scattered geometry: suppress the penalty at exact data matches.
        geom = self.plan.geom_points
        for p in np.atleast_2d(self.data.points):
            mask[np.all(geom == p, axis=1)] = 0.0
        return mask

    # Parameter vector layout ---------------------------------------------

    @property
    def size(self) -> int:
        return sum(self._m_sizes) + sum(self._b_sizes)

    def pack(self) -> np.ndarray:
        parts = [self.mset.params_concat()]
        if self.betas is not None:
            parts.append(self.betas.params_concat())
        return np.concatenate(parts)

    def split(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.size:
            raise ShapeError(f"theta has {theta.size} entries, expected {self.size}")
        out_m, at = [], 0
        for s in self._m_sizes:
            out_m.append(theta[at : at + s])
            at += s
        out_b = []
        for s in self._b_sizes:
            out_b.append(theta[at : at + s])
            at += s
        return out_m, out_b

    def rebuild(self, theta: np.ndarray):
        """Materialize (MeasurementSet, CoefficientFields | None) from theta."""
        m_params, b_params = self.split(theta)
        mset = self.mset.with_params_concat(np.concatenate(m_params))
        betas = None
        if self.betas is not None:
            betas = self.betas.with_params_concat(np.concatenate(b_params))
        return mset, betas

    # Forward pieces --------------------------------------------------------

    def _gradients(self, m_params):
        """Per-field gradients at geometry and data points.

        Returns (g_geom, g_data): lists of (n, N) arrays.  For nodal
        fields the data rows are views into the geometry rows.
        """
        g_geom, g_data = [], []
        if isinstance(self.plan, _NodalPlan):
            for p in m_params:
                g = self.plan.grad_flat(p)
                g_geom.append(g)
                g_data.append(None if self.plan.data_idx is None else g[self.plan.data_idx])
        else:
            for p in m_params:
                g_geom.append(
                    np.stack([ga @ p for ga in self.plan.grad_geom], axis=1)
                )
                if self.plan.grad_data is None:
                    g_data.append(None)
                else:
                    g_data.append(
                        np.stack([ga @ p for ga in self.plan.grad_data], axis=1)
                    )
        return g_geom, g_data

    def _beta_values(self, b_params):
        """Coefficient-field values at the data points, shape (K, n_data)."""
        if isinstance(self.plan, _NodalPlan):
            return np.stack([p[self.plan.data_idx] for p in b_params])
        return np.stack([self.plan.value_data @ p for p in b_params])

    def field_values_geometry(self, theta: np.ndarray) -> np.ndarray:
        """Measurement values at the geometry points, shape (K, n_geom)."""
        m_params, _ = self.split(theta)
        if isinstance(self.plan, _NodalPlan):
            return np.stack(m_params)
        return np.stack([self.plan.value_geom @ p for p in m_params])

    # Loss and gradient ------------------------------------------------------

    def loss(self, theta: np.ndarray, alpha: float) -> LossBreakdown:
        return self._evaluate(theta, alpha, want_grad=False)[0]

    def loss_and_grad(self, theta: np.ndarray, alpha: float):
        return self._evaluate(theta, alpha, want_grad=True)

    def _evaluate(self, theta, alpha, want_grad):
        alpha = float(alpha)
        m_params, b_params = self.split(theta)
        g_geom, g_data = self._gradients(m_params)
        k, eps = self.k, self.eps
        cot_geom = [np.zeros_like(g) for g in g_geom] if want_grad else None
        cot_data = None
        if want_grad and g_data[0] is not None:
            cot_data = [np.zeros_like(g) for g in g_data]

        term_a = 0.0
        if self.vectors is not None:
            for i in range(k):
                r = np.einsum("pa,pa->p", g_data[i], self.vectors) - 1.0
                term_a += 0.5 * self.w_data * float(r @ r)
                if want_grad:
                    cot_data[i] += (alpha * self.w_data) * r[:, None] * self.vectors

        term_b = 0.0
        if k >= 2:
            norms = [np.einsum("pa,pa->p", g, g) + eps for g in g_geom]
            for i in range(k):
                for j in range(i + 1, k):
                    u = np.einsum("pa,pa->p", g_geom[i], g_geom[j])
                    denom = norms[i] * norms[j]
                    c2 = u * u / denom
                    term_b += 0.5 * self.w_geom * float(np.sum(c2))
                    if want_grad:
                        s = self.w_geom * (u / denom)
                        cot_geom[i] += s[:, None] * g_geom[j] - (
                            self.w_geom * c2 / norms[i]
                        )[:, None] * g_geom[i]
                        cot_geom[j] += s[:, None] * g_geom[i] - (
                            self.w_geom * c2 / norms[j]
                        )[:, None] * g_geom[j]

        term_c = 0.0
        cot_beta = None
        if self.mode == "dr":
            b_vals = self._beta_values(b_params)
            resid = self.vectors - np.einsum("kp,kpa->pa", b_vals, np.stack(g_data))
            term_c = 0.5 * self.w_data * float(np.sum(resid * resid))
            if want_grad:
                cot_beta = np.empty((k, resid.shape[0]))
                for i in range(k):
                    cot_data[i] += (-self.w_data) * b_vals[i][:, None] * resid
                    cot_beta[i] = (-self.w_data) * np.einsum(
                        "pa,pa->p", g_data[i], resid
                    )

        term_s = 0.0
        if self._mask is not None:
            sw = self.smoothness_weight * self.w_geom
            for i in range(k):
                sq = np.einsum("pa,pa->p", g_geom[i], g_geom[i])
                term_s += 0.5 * sw * float(self._mask @ sq)
                if want_grad:
                    cot_geom[i] += sw * self._mask[:, None] * g_geom[i]

        total = alpha * term_a + term_b + term_c + term_s
        if not np.isfinite(total):
            raise NonFiniteLossError(
                f"loss is non-finite: A={term_a} B={term_b} C={term_c} S={term_s}"
            )
        breakdown = LossBreakdown(
            termA=term_a,
            termB=term_b,
            termC=term_c,
            termS=term_s,
            alpha=alpha,
            total=total,
        )
        if not want_grad:
            return breakdown, None
        return breakdown, self._assemble_grad(cot_geom, cot_data, cot_beta)

    def _assemble_grad(self, cot_geom, cot_data, cot_beta):
        parts = []
        if isinstance(self.plan, _NodalPlan):
            for i in range(self.k):
                cot = cot_geom[i]
                if cot_data is not None:
                    # lattice indices are duplicate-free, so plain fancy
                    # indexing is a correct scatter-add
                    cot = cot.copy()
                    cot[self.plan.data_idx] += cot_data[i]
                parts.append(self.plan.grad_adjoint(cot))
            if cot_beta is not None:
                for i in range(self.k):
                    g = np.zeros(self.plan.grid.node_count)
                    g[self.plan.data_idx] = cot_beta[i]
                    parts.append(g)
        else:
            for i in range(self.k):
                g = np.zeros(self._m_sizes[i])
                for a in range(self.dim):
                    g += self.plan.grad_geom[a].T @ cot_geom[i][:, a]
                    if cot_data is not None:
                        g += self.plan.grad_data[a].T @ cot_data[i][:, a]
                parts.append(g)
            if cot_beta is not None:
                for i in range(self.k):
                    parts.append(self.plan.value_data.T @ cot_beta[i])
        return np.concatenate(parts)


# Spec-level term functions -------------------------------------------------------


def term_A(mset: MeasurementSet, data: VectorFieldSamples) -> float:
    """Fidelity: 1/2 sum_i integral (grad m_i . P - 1)^2 over the data."""
    asm = LossAssembly(mset, data)
    return asm.loss(asm.pack(), alpha=1.0).termA


def term_B(
    mset: MeasurementSet,
    eps: EpsilonPolicy = EpsilonPolicy(),
    points=None,
) -> float:
    """Orthogonality: 1/2 sum_{i<j} integral cos^2 of gradient angles.

    Nodal sets integrate over their own grid.  Smooth-basis sets use the
    given geometry points, falling back to the basis's reference points.
    """
    if mset.count < 2:
        return 0.0
    asm = LossAssembly(mset, None, eps=eps, geometry=points)
    return asm.loss(asm.pack(), alpha=1.0).termB


def term_C(
    mset: MeasurementSet,
    betas: CoefficientFields,
    data: VectorFieldSamples,
    eps: EpsilonPolicy = EpsilonPolicy(),
) -> float:
    """Sparse reconstruction error: 1/2 integral ||P - sum beta_i grad m_i||^2."""
    asm = LossAssembly(mset, data, betas=betas, mode="dr", eps=eps)
    return asm.loss(asm.pack(), alpha=1.0).termC


def total_loss(
    mset: MeasurementSet,
    betas: CoefficientFields | None,
    data: VectorFieldSamples,
    alpha: float,
    mode: str = "standard",
    eps: EpsilonPolicy = EpsilonPolicy(),
    smoothness_weight: float = 0.0,
    geometry=None,
) -> LossBreakdown:
    """alpha-weighted total with per-addend breakdown."""
    if not alpha > 0:
        raise ShapeError("alpha must be positive")
    asm = LossAssembly(
        mset,
        data,
        betas=betas,
        mode=mode,
        eps=eps,
        smoothness_weight=smoothness_weight,
        geometry=geometry,
    )
    return asm.loss(asm.pack(), alpha)
