"""Exception types shared across the package."""


class KoopregError(Exception):
    """Base class for all koopreg errors."""


class DomainError(KoopregError):
    """A point lies outside the domain box, or off the sampling lattice."""


class ShapeError(KoopregError):
    """Array shapes, lengths, or index ranges are inconsistent."""


class RankError(KoopregError):
    """An operation requires a square (K = N) measurement set."""


class SingularJacobianError(KoopregError):
    """The measurement Jacobian is numerically singular at some point.

    Carries the offending point and its condition number.
    """

    def __init__(self, point, cond):
        self.point = point
        self.cond = cond
        super().__init__(
            f"measurement Jacobian is near-singular at {tuple(point)} "
            f"(condition number {cond:.3e})"
        )


class DivergenceError(KoopregError):
    """Orbit integration produced a non-finite state.

    Carries the step index at which the state first became non-finite.
    """

    def __init__(self, step):
        self.step = step
        super().__init__(f"non-finite state at integration step {step}")


class NonFiniteLossError(KoopregError):
    """A loss evaluation produced NaN or infinity."""


class OptimizationDiverged(KoopregError):
    """An optimization run ended in the diverged state.

    Raised by pipelines after their artifacts are written, so partial
    results stay on disk for inspection.
    """


class DegenerateReferenceError(KoopregError):
    """A relative error metric was asked for against a degenerate reference."""


class UnderdeterminedError(KoopregError):
    """Too few samples to constrain the requested field parametrization."""


class ConfigError(KoopregError):
    """A run configuration is malformed or contains unknown keys."""
