"""Exact parameter gradients of the discrete losses, plus diagnostics.

The optimizer's gradient is discretize-then-differentiate: the chain
rule applied through the difference stencils, quadrature weights, and
eps-guarded denominators of the assembled loss, so it is exact for the
objective actually being minimized and a central finite-difference
oracle can verify it to tight tolerance.

The continuous variational derivatives (divergence forms obtained by
integration by parts) are provided as diagnostics only: at interior
nodes the discrete gradient divided by the cell volume approaches them
under grid refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import VectorFieldSamples
from .errors import DomainError, ShapeError
from .field import NodalField, axis_difference
from .functional import (
    CoefficientFields,
    EpsilonPolicy,
    LossAssembly,
    MeasurementSet,
)

__all__ = [
    "ParamGradient",
    "grad_total",
    "grad_fd_oracle",
    "continuous_variational_A",
    "continuous_variational_B",
]


@dataclass(frozen=True)
class ParamGradient:
    """Gradient arrays mirroring each field's parameter layout."""

    m_grads: tuple
    beta_grads: tuple | None = None

    def __post_init__(self):
        for g in self.m_grads + (self.beta_grads or ()):
            if not np.all(np.isfinite(g)):
                raise ShapeError("gradient has non-finite entries")

    def concat(self) -> np.ndarray:
        parts = list(self.m_grads) + list(self.beta_grads or ())
        return np.concatenate(parts)


def grad_total(
    mset: MeasurementSet,
    betas: CoefficientFields | None,
    data: VectorFieldSamples,
    alpha: float,
    mode: str = "standard",
    eps: EpsilonPolicy = EpsilonPolicy(),
    smoothness_weight: float = 0.0,
    geometry=None,
) -> ParamGradient:
    """Exact gradient of the discretized total loss for every parameter."""
    asm = LossAssembly(
        mset,
        data,
        betas=betas,
        mode=mode,
        eps=eps,
        smoothness_weight=smoothness_weight,
        geometry=geometry,
    )
    _, flat = asm.loss_and_grad(asm.pack(), alpha)
    m_parts, b_parts = asm.split(flat)
    return ParamGradient(
        m_grads=tuple(np.array(p) for p in m_parts),
        beta_grads=None if not b_parts else tuple(np.array(p) for p in b_parts),
    )


def grad_fd_oracle(loss, params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar loss closure, per parameter.

    Independent of the exact gradient path on purpose: two loss calls per
    parameter, nothing shared with the chain-rule code.
    """
    if not h > 0:
        raise ShapeError("finite-difference step must be positive")
    p = np.asarray(params, dtype=float).reshape(-1)
    out = np.empty_like(p)
    for i in range(p.size):
        bumped = p.copy()
        bumped[i] = p[i] + h
        up = float(loss(bumped))
        bumped[i] = p[i] - h
        down = float(loss(bumped))
        if not (np.isfinite(up) and np.isfinite(down)):
            raise ShapeError(f"non-finite loss while probing parameter {i}")
        out[i] = (up - down) / (2.0 * h)
    return out


def _divergence(grid, flux: np.ndarray) -> np.ndarray:
    """Discrete divergence of an (n_nodes, N) vector field on the grid."""
    div = np.zeros(grid.node_count)
    for a in range(grid.dim):
        comp = flux[:, a].reshape(grid.counts)
        div += axis_difference(comp, a, grid.spacing[a]).reshape(-1)
    return div


def continuous_variational_A(m: NodalField, data: VectorFieldSamples) -> NodalField:
    """Variational derivative of the fidelity term, -div{(grad m . P - 1) P}.

    Diagnostic only: the optimizer uses the exact discrete gradient,
    which approaches cell_volume times this field at interior nodes.
    """
    if not isinstance(m, NodalField):
        raise ShapeError("the variational diagnostic needs a nodal field")
    if data.layout is None or data.layout != m.grid:
        raise DomainError("data must cover the field's own grid")
    g = np.stack([a.reshape(-1) for a in m.gradient_grid()], axis=1)
    resid = np.einsum("pa,pa->p", g, data.vectors) - 1.0
    flux = resid[:, None] * data.vectors
    return NodalField(m.grid, -_divergence(m.grid, flux))


def continuous_variational_B(
    mset: MeasurementSet,
    index: int,
    eps: EpsilonPolicy = EpsilonPolicy(),
) -> NodalField:
    """Variational derivative of the orthogonality term for one field.

    Returns -div of the bracketed flux
    sum_j cos(theta_ij)/|grad m_i| * (grad m_j/|grad m_j|
                                      - cos(theta_ij) grad m_i/|grad m_i|)
    with eps-guarded norms; zero wherever the gradients are orthogonal,
    and zero when m_j is parallel to m_i (the bracket cancels).
    """
    if not mset.is_nodal:
        raise ShapeError("the variational diagnostic needs nodal fields")
    if mset.count < 2:
        raise ShapeError("orthogonality needs at least two fields")
    if not 0 <= index < mset.count:
        raise ShapeError(f"field index {index} out of range")
    grid = mset[index].grid
    grads = [
        np.stack([a.reshape(-1) for a in f.gradient_grid()], axis=1) for f in mset
    ]
    norms = [np.sqrt(np.einsum("pa,pa->p", g, g) + eps.eps) for g in grads]
    gi, ni = grads[index], norms[index]
    flux = np.zeros_like(gi)
    for j in range(mset.count):
        if j == index:
            continue
        gj, nj = grads[j], norms[j]
        cos = np.einsum("pa,pa->p", gi, gj) / (ni * nj)
        flux += (cos / ni)[:, None] * (gj / nj[:, None] - (cos / ni)[:, None] * gi)
    return NodalField(grid, -_divergence(grid, flux))
