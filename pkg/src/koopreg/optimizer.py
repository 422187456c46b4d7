"""Gradient descent with backtracking and the exact-penalty alpha schedule.

The fidelity weight alpha is raised when progress stalls while some
measurement has collapsed toward a constant (the characteristic local
minimum of the orthogonality term), and lowered again once every field
has stayed non-constant for a full window.  A stall with no collapse is
convergence.

Descent steps use Armijo backtracking on the assembled total loss, with
the accepted step carried to the next iteration at twice its size, so
the step length adapts without a separate schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .dynamics import VectorFieldSamples
from .errors import NonFiniteLossError, ShapeError
from .field import (
    GridSpec,
    NodalField,
    SmoothBasisField,
    bounding_box_volume,
)
from .functional import (
    CoefficientFields,
    EpsilonPolicy,
    LossAssembly,
    LossBreakdown,
    MeasurementSet,
)
from .reconstruct import solve_betas

__all__ = [
    "OptimConfig",
    "OptResult",
    "init_fields",
    "minimize",
    "detect_collapse",
    "INIT_STRATEGIES",
    "TERMINATIONS",
]

INIT_STRATEGIES = ("coordinate_ramps", "random_smooth")
TERMINATIONS = ("converged", "max_iters", "diverged")


@dataclass(frozen=True)
class OptimConfig:
    """Penalty schedule, step control, and stopping thresholds."""

    alpha0: float = 10.0
    alpha_up: float = 2.0
    alpha_down: float = 0.5
    alpha_min: float = 0.1
    alpha_max: float = 1e4
    step0: float = 1e-2
    backtrack_factor: float = 0.5
    backtrack_c: float = 1e-4
    backtrack_max: int = 30
    max_iters: int = 20000
    stall_window: int = 200
    rel_tol: float = 1e-6
    collapse_var_tol: float | None = None  # None: 1e-4 x domain volume
    smoothness_weight: float = 0.0
    seed: int = 0

    def __post_init__(self):
        checks = [
            self.alpha0 > 0,
            self.alpha_up > 1,
            0 < self.alpha_down < 1,
            0 < self.alpha_min <= self.alpha_max,
            self.step0 > 0,
            0 < self.backtrack_factor < 1,
            0 < self.backtrack_c < 1,
            self.backtrack_max >= 1,
            self.max_iters >= 1,
            self.stall_window >= 1,
            self.rel_tol > 0,
            self.collapse_var_tol is None or self.collapse_var_tol > 0,
            self.smoothness_weight >= 0,
        ]
        if not all(checks):
            raise ShapeError("optimizer configuration violates a range constraint")


@dataclass
class OptResult:
    """Outcome of one minimization run."""

    mset: MeasurementSet
    betas: CoefficientFields | None
    history: list
    alpha_trace: list
    step_trace: list
    termination: str
    iters: int

    def __post_init__(self):
        if not self.history:
            raise ShapeError("history must be non-empty")
        if self.termination not in TERMINATIONS:
            raise ShapeError(f"unknown termination {self.termination!r}")


# Initialization -----------------------------------------------------------------


def _ramp_scales(dim: int, data: VectorFieldSamples | None) -> np.ndarray:
    """Per-axis scale s_i = mean of P_i over the data, guarded away from 0.

    The guard is relative: a component whose mean is buried under its own
    fluctuation (noise over a sign-symmetric field) gets scale 1 instead
    of a near-zero divisor that would blow the ramp up by orders of
    magnitude.
    """
    scales = np.ones(dim)
    if data is not None:
        means = data.vectors.mean(axis=0)
        rms = np.sqrt(np.mean(data.vectors**2, axis=0))
        keep = np.abs(means) > np.maximum(1e-12, 0.05 * rms)
        scales[keep] = means[keep]
    return scales


def _random_smooth_values(points: np.ndarray, rng) -> np.ndarray:
    """Low-frequency random surface over the points' bounding box."""
    pts = np.atleast_2d(points)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    u = 2.0 * (pts - lo) / span - 1.0
    dim = pts.shape[1]
    lin = rng.normal(size=dim)
    quad = 0.3 * rng.normal(size=(dim, dim))
    return u @ lin + np.einsum("pi,ij,pj->p", u, quad, u)


def init_fields(
    domain,
    n: int,
    k: int,
    strategy: str = "coordinate_ramps",
    data: VectorFieldSamples | None = None,
    seed: int = 0,
) -> MeasurementSet:
    """Starting measurement set over a grid (nodal) or basis (smooth).

    coordinate_ramps: m_i = x_i / s_i with s_i the data mean of P_i, so
    the initial unit-speed residual averages zero along each used axis
    and distinct axes start exactly orthogonal.  random_smooth: seeded
    low-frequency random combination of the coordinates.
    """
    if strategy not in INIT_STRATEGIES:
        raise ShapeError(f"strategy must be one of {INIT_STRATEGIES}")
    if not 1 <= k <= n:
        raise ShapeError(f"need 1 <= K <= N, got K={k}, N={n}")
    rng = np.random.default_rng(seed)

    if isinstance(domain, GridSpec):
        if domain.dim != n:
            raise ShapeError(f"grid dim {domain.dim} does not match N={n}")
        nodes = domain.nodes()
        fields = []
        for i in range(k):
            if strategy == "coordinate_ramps":
                vals = nodes[:, i] / _ramp_scales(n, data)[i]
            else:
                vals = _random_smooth_values(nodes, rng)
            fields.append(NodalField(domain, vals))
        return MeasurementSet(fields)

    basis = domain
    if basis.dim != n:
        raise ShapeError(f"basis dim {basis.dim} does not match N={n}")
    fit_pts = data.points if data is not None else basis.reference_points()
    fields = []
    for i in range(k):
        if strategy == "coordinate_ramps":
            vals = fit_pts[:, i] / _ramp_scales(n, data)[i]
        else:
            vals = _random_smooth_values(fit_pts, rng)
        fields.append(SmoothBasisField(basis, basis.fit(fit_pts, vals)))
    return MeasurementSet(fields)


# Collapse detection -------------------------------------------------------------


def _domain_volume(mset: MeasurementSet, points=None) -> float:
    if mset.is_nodal:
        return mset[0].grid.box_volume
    if points is not None:
        return bounding_box_volume(points)
    return bounding_box_volume(mset[0].basis.reference_points())


def _collapsed_rows(values: np.ndarray, tol: float) -> list:
    return [bool(np.var(row) < tol) for row in values]


def detect_collapse(
    mset: MeasurementSet, tol: float | None = None, points=None
) -> list:
    """Per field: has it flattened to (nearly) a constant?

    Variance of the nodal values, or of the basis values sampled at the
    given points (reference points by default), against the tolerance;
    the default tolerance is 1e-4 times the domain volume.
    """
    if tol is None:
        tol = 1e-4 * _domain_volume(mset, points)
    if mset.is_nodal:
        values = np.stack([f.params for f in mset])
    else:
        pts = points if points is not None else mset[0].basis.reference_points()
        values = np.stack([f.values_at(pts) for f in mset])
    return _collapsed_rows(values, tol)


# Minimization --------------------------------------------------------------------


def minimize(
    data: VectorFieldSamples,
    config: OptimConfig,
    mode: str = "standard",
    k: int | None = None,
    init: MeasurementSet | None = None,
    *,
    betas: CoefficientFields | None = None,
    eps: EpsilonPolicy = EpsilonPolicy(),
    geometry=None,
    callback=None,
) -> OptResult:
    """Minimize the total loss from the given starting fields.

    Standard mode requires a square set (K = N) so the field stays
    reconstructable; DR mode additionally carries coefficient fields,
    re-solved in closed form each iteration (a block step) with the
    gradient step acting on the measurements.

    Termination is one of: converged (stall with every field
    non-constant), max_iters, diverged (non-finite loss or gradient).
    The callback, when given, sees (iteration, breakdown, alpha, step,
    theta) once per iteration.
    """
    if data is None or data.count == 0:
        raise ShapeError("minimize needs non-empty data")
    if init is None:
        raise ShapeError("minimize needs an initial measurement set")
    if k is not None and k != init.count:
        raise ShapeError(f"K={k} does not match the {init.count} initial fields")
    if mode == "standard" and init.count != init.dim:
        raise ShapeError(
            f"standard mode needs K = N, got K={init.count}, N={init.dim}"
        )
    if mode == "dr" and betas is None:
        betas = solve_betas(init, data, eps)

    asm = LossAssembly(
        init,
        data,
        betas=betas,
        mode=mode,
        eps=eps,
        smoothness_weight=config.smoothness_weight,
        geometry=geometry,
    )
    theta = asm.pack()
    alpha = config.alpha0
    var_tol = config.collapse_var_tol
    if var_tol is None:
        var_tol = 1e-4 * _domain_volume(init, asm.plan.geom_points)

    def any_collapsed(th) -> bool:
        values = asm.field_values_geometry(th)
        return any(_collapsed_rows(values, var_tol))

    breakdown = asm.loss(theta, alpha)
    history = [breakdown]
    alpha_trace = [alpha]
    step_trace = [config.step0]
    step = config.step0
    best_total = breakdown.total
    since_improve = 0
    clean_streak = 0  # iterations since a collapse was last seen
    raised = False
    termination = "max_iters"
    it = 0

    for it in range(1, config.max_iters + 1):
        try:
            if asm.mode == "dr":
                theta, breakdown = _beta_block(asm, theta, alpha, data, eps, breakdown)
            breakdown, grad = asm.loss_and_grad(theta, alpha)
            if not np.all(np.isfinite(grad)):
                termination = "diverged"
                break
            theta, breakdown, step = _armijo(
                asm, theta, breakdown, grad, alpha, step, config
            )
        except NonFiniteLossError:
            termination = "diverged"
            break

        history.append(breakdown)
        alpha_trace.append(alpha)
        step_trace.append(step)
        if callback is not None:
            callback(it, breakdown, alpha, step, theta)

        improved = breakdown.total < best_total * (1.0 - config.rel_tol)
        if improved:
            best_total = breakdown.total
            since_improve = 0
        else:
            since_improve += 1

        collapsed = any_collapsed(theta)
        clean_streak = 0 if collapsed else clean_streak + 1

        if since_improve >= config.stall_window:
            if collapsed:
                # fidelity pressure pushes the flat field off its plateau
                alpha = min(alpha * config.alpha_up, config.alpha_max)
                raised = True
                breakdown = asm.loss(theta, alpha)
                best_total = breakdown.total
                since_improve = 0
                clean_streak = 0
            else:
                termination = "converged"
                break
        elif raised and clean_streak >= config.stall_window:
            alpha = max(alpha * config.alpha_down, config.alpha_min)
            if alpha <= config.alpha0:
                raised = False
            breakdown = asm.loss(theta, alpha)
            best_total = breakdown.total
            since_improve = 0
            clean_streak = 0

    mset, out_betas = asm.rebuild(theta)
    return OptResult(
        mset=mset,
        betas=out_betas,
        history=history,
        alpha_trace=alpha_trace,
        step_trace=step_trace,
        termination=termination,
        iters=it,
    )


def _armijo(asm, theta, breakdown, grad, alpha, step, config):
    """One backtracking line-search step; returns (theta, breakdown, next step).

    A fully failed search leaves theta in place (counts toward the stall
    window) and restarts the next iteration from the smallest step tried.
    """
    gnorm2 = float(grad @ grad)
    if gnorm2 == 0.0:
        return theta, breakdown, step
    t = step
    for _ in range(config.backtrack_max + 1):
        trial = theta - t * grad
        try:
            bd = asm.loss(trial, alpha)
        except NonFiniteLossError:
            t *= config.backtrack_factor
            continue
        if bd.total <= breakdown.total - config.backtrack_c * t * gnorm2:
            return trial, bd, 2.0 * t
        t *= config.backtrack_factor
    return theta, breakdown, t


def _beta_block(asm, theta, alpha, data, eps, breakdown):
    """Closed-form beta refresh, kept only if it does not raise the total."""
    mset, _ = asm.rebuild(theta)
    solved = solve_betas(mset, data, eps)
    m_params, _ = asm.split(theta)
    candidate = np.concatenate(list(m_params) + [solved.params_concat()])
    bd = asm.loss(candidate, alpha)
    if bd.total <= breakdown.total:
        return candidate, bd
    return theta, breakdown
