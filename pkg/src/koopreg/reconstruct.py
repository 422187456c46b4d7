"""Vector-field reconstruction from measurement sets.

A full-rank set (K = N) restores the field pointwise through the
Jacobian identity P_hat = J(m)^{-1} 1, where row i of J is grad m_i.  A
reduced set (K < N) restores the in-span part P_hat = sum_i beta_i grad
m_i with coefficient fields solved pointwise by least squares.

Koopman eigenfunctions attach through Phi = exp(lambda m): when m has
unit speed along the flow, Phi satisfies grad Phi . P = lambda Phi, and
``kpde_residual`` measures the pointwise defect of that equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import VectorFieldSamples
from .errors import DomainError, RankError, ShapeError, SingularJacobianError
from .field import GridSpec, NodalField, ScalarField, SmoothBasisField
from .functional import CoefficientFields, EpsilonPolicy, MeasurementSet

__all__ = [
    "JacobianSample",
    "KefSpec",
    "jacobians",
    "reconstruct_full",
    "solve_betas",
    "reconstruct_reduced",
    "kef_synthesize",
    "kpde_residual",
]


@dataclass(frozen=True)
class JacobianSample:
    """Stacked measurement gradients at one point (rows = grad m_i)."""

    point: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.point)) and np.all(np.isfinite(self.matrix))):
            raise ShapeError("jacobian sample has non-finite entries")
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.point.size:
            raise ShapeError(
                f"matrix {self.matrix.shape} does not match point dim {self.point.size}"
            )


@dataclass(frozen=True)
class KefSpec:
    """Eigenvalue and source-measurement index for KEF synthesis."""

    lam: complex
    source: int = 0

    def __post_init__(self):
        if not np.isfinite(complex(self.lam)):
            raise ShapeError("eigenvalue must be finite")


def _resolve_points(at):
    if isinstance(at, GridSpec):
        return at.nodes(), at
    return np.atleast_2d(np.asarray(at, dtype=float)), None


def jacobians(mset: MeasurementSet, at) -> np.ndarray:
    """Measurement Jacobians at each point, shape (npoints, K, N)."""
    pts, _ = _resolve_points(at)
    grads = mset.gradients_at(pts)
    return np.transpose(grads, (1, 0, 2))


def reconstruct_full(
    mset: MeasurementSet, at, cond_limit: float = 1e8
) -> VectorFieldSamples:
    """Restore the field via J(m) P_hat = 1 at each point (K = N only).

    A Jacobian whose condition number exceeds the limit aborts with the
    offending point: near-singular J means locally dependent
    measurements, which is diagnostic information rather than noise.
    """
    if mset.count != mset.dim:
        raise RankError(
            f"full reconstruction needs K = N, got K={mset.count}, N={mset.dim}"
        )
    pts, layout = _resolve_points(at)
    jac = jacobians(mset, pts)
    svals = np.linalg.svd(jac, compute_uv=False)
    with np.errstate(divide="ignore"):
        conds = np.where(svals[:, -1] > 0, svals[:, 0] / svals[:, -1], np.inf)
    bad = conds > cond_limit
    if np.any(bad):
        i = int(np.argmax(bad))
        raise SingularJacobianError(point=tuple(pts[i]), cond=float(conds[i]))
    ones = np.ones((len(pts), mset.dim, 1))
    vectors = np.linalg.solve(jac, ones)[..., 0]
    return VectorFieldSamples(points=pts, vectors=vectors, layout=layout)


def solve_betas(
    mset: MeasurementSet,
    data: VectorFieldSamples,
    eps: EpsilonPolicy = EpsilonPolicy(),
) -> CoefficientFields:
    """Pointwise least-squares coefficients beta(x) minimizing
    ||P(x) - sum_i beta_i grad m_i(x)||^2, assembled into fields.

    The per-point normal equations carry an eps ridge, so rank-deficient
    gradient sets yield the minimum-norm-leaning solution instead of
    failing.  Assembly matches the measurement representation: nodal
    fields carry the solved values at the data nodes (zero elsewhere),
    smooth bases are least-squares fit to the solved values.
    """
    grads = mset.gradients_at(data.points)
    g = np.transpose(grads, (1, 0, 2))
    gram = np.einsum("pka,pla->pkl", g, g)
    gram += eps.eps * np.eye(mset.count)
    rhs = np.einsum("pka,pa->pk", g, data.vectors)
    beta = np.linalg.solve(gram, rhs[..., None])[..., 0]

    fields = []
    if mset.is_nodal:
        grid = mset[0].grid
        idx = grid.index_of(data.points)
        for i in range(mset.count):
            vals = np.zeros(grid.node_count)
            vals[idx] = beta[:, i]
            fields.append(NodalField(grid, vals))
    else:
        basis = mset[0].basis
        for i in range(mset.count):
            fields.append(SmoothBasisField(basis, basis.fit(data.points, beta[:, i])))
    return CoefficientFields(fields)


def reconstruct_reduced(
    mset: MeasurementSet, betas: CoefficientFields, at
) -> VectorFieldSamples:
    """Restore the in-span field P_hat = sum_i beta_i(x) grad m_i(x)."""
    if betas.count != mset.count:
        raise ShapeError(
            f"{betas.count} coefficient fields for {mset.count} measurements"
        )
    pts, layout = _resolve_points(at)
    grads = mset.gradients_at(pts)
    if mset.is_nodal:
        idx = mset[0].grid.index_of(pts)
        bvals = np.stack([f.params[idx] for f in betas])
    else:
        bvals = np.stack([f.values_at(pts) for f in betas])
    vectors = np.einsum("kp,kpa->pa", bvals, grads)
    return VectorFieldSamples(points=pts, vectors=vectors, layout=layout)


def kef_synthesize(m: ScalarField, spec: KefSpec, at: GridSpec | None = None):
    """Koopman eigenfunction candidate Phi = exp(lambda m) on a lattice.

    Nodal measurements synthesize on their own grid; smooth-basis
    measurements need an explicit target grid.  Purely imaginary lambda
    on a real m gives |Phi| = 1 identically.
    """
    lam = complex(spec.lam)
    if isinstance(m, NodalField):
        grid = m.grid if at is None else at
        if grid != m.grid:
            raise DomainError("nodal synthesis runs on the field's own grid")
        values = np.exp(lam * m.values.reshape(-1))
    elif isinstance(m, SmoothBasisField):
        if at is None:
            raise ShapeError("smooth-basis synthesis needs a target grid")
        grid = at
        values = np.exp(lam * m.values_at(grid.nodes()))
    else:
        raise ShapeError(f"unsupported field type {type(m).__name__}")
    return NodalField(grid, values)


def kpde_residual(phi: NodalField, lam: complex, data: VectorFieldSamples) -> np.ndarray:
    """Pointwise defect |grad Phi . P - lambda Phi| on the data grid."""
    if not isinstance(phi, NodalField):
        raise ShapeError("residual evaluation needs a nodal eigenfunction")
    if data.layout is None or data.layout != phi.grid:
        raise DomainError("data must cover the eigenfunction's own grid")
    grads = np.stack([a.reshape(-1) for a in phi.gradient_grid()], axis=1)
    adv = np.einsum("pa,pa->p", grads, data.vectors.astype(grads.dtype))
    resid = adv - complex(lam) * phi.values.reshape(-1)
    return np.abs(resid)
