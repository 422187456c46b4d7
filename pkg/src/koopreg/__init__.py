"""koopreg: vector-field denoising, generalization and reduction through
unit velocity measurements.

A measurement is a scalar field m whose gradient advances at unit rate
along the flow, grad(m) . P = 1.  Fitting several mutually transverse
measurements to noisy or sparse samples of P and inverting their
Jacobians restores, in-fills, or compresses the field.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateReferenceError,
    DivergenceError,
    DomainError,
    KoopregError,
    NonFiniteLossError,
    OptimizationDiverged,
    RankError,
    ShapeError,
    SingularJacobianError,
    UnderdeterminedError,
)
from .field import (
    GaussianRBFBasis,
    GradientField,
    GridSpec,
    NodalField,
    ScalarField,
    SmoothBasisField,
    TensorPolynomialBasis,
    axis_difference,
    axis_difference_adjoint,
    bounding_box_volume,
    field_from_json,
    field_to_json,
    gradient,
    infer_grid,
    integrate,
    interpolate,
    nodal_from_csv,
    nodal_to_csv,
)
from .dynamics import (
    SYSTEM_NAMES,
    LimitCycle2D,
    LinearSystem,
    LorenzSystem,
    NoiseSpec,
    VectorFieldSamples,
    add_noise,
    extract_segment,
    integrate_orbit,
    planar_window,
    sample_grid,
    sample_points,
    system_by_name,
)
from .functional import (
    MODES,
    CoefficientFields,
    EpsilonPolicy,
    LossAssembly,
    LossBreakdown,
    MeasurementSet,
    term_A,
    term_B,
    term_C,
    total_loss,
)
from .gradients import (
    ParamGradient,
    continuous_variational_A,
    continuous_variational_B,
    grad_fd_oracle,
    grad_total,
)
from .reconstruct import (
    JacobianSample,
    KefSpec,
    jacobians,
    kef_synthesize,
    kpde_residual,
    reconstruct_full,
    reconstruct_reduced,
    solve_betas,
)
from .optimizer import (
    INIT_STRATEGIES,
    TERMINATIONS,
    OptimConfig,
    OptResult,
    detect_collapse,
    init_fields,
    minimize,
)
from .metrics import (
    HistogramPair,
    QualityReport,
    error_histogram,
    noise_reduction,
    orthogonality_stats,
    relative_mse,
    unit_residual_stats,
)
from .svgplot import contour_svg, quiver_svg, trace_svg
from .pipelines import (
    COMMANDS,
    gradient_check_sweep,
    load_config_file,
    resolve_config,
    run_denoise,
    run_eval,
    run_generalize,
    run_gradcheck,
    run_reduce,
    run_synth,
)

__all__ = [
    "__version__",
    # errors
    "KoopregError",
    "ConfigError",
    "DegenerateReferenceError",
    "DivergenceError",
    "DomainError",
    "NonFiniteLossError",
    "OptimizationDiverged",
    "RankError",
    "ShapeError",
    "SingularJacobianError",
    "UnderdeterminedError",
    # fields and geometry
    "GridSpec",
    "infer_grid",
    "bounding_box_volume",
    "axis_difference",
    "axis_difference_adjoint",
    "ScalarField",
    "NodalField",
    "SmoothBasisField",
    "TensorPolynomialBasis",
    "GaussianRBFBasis",
    "GradientField",
    "gradient",
    "integrate",
    "interpolate",
    "field_to_json",
    "field_from_json",
    "nodal_to_csv",
    "nodal_from_csv",
    # dynamics and sampling
    "LinearSystem",
    "LimitCycle2D",
    "LorenzSystem",
    "SYSTEM_NAMES",
    "system_by_name",
    "VectorFieldSamples",
    "NoiseSpec",
    "sample_grid",
    "sample_points",
    "add_noise",
    "integrate_orbit",
    "extract_segment",
    "planar_window",
    # loss functional
    "MODES",
    "EpsilonPolicy",
    "LossBreakdown",
    "MeasurementSet",
    "CoefficientFields",
    "LossAssembly",
    "term_A",
    "term_B",
    "term_C",
    "total_loss",
    # gradients
    "ParamGradient",
    "grad_total",
    "grad_fd_oracle",
    "continuous_variational_A",
    "continuous_variational_B",
    # reconstruction
    "JacobianSample",
    "KefSpec",
    "jacobians",
    "reconstruct_full",
    "solve_betas",
    "reconstruct_reduced",
    "kef_synthesize",
    "kpde_residual",
    # optimization
    "OptimConfig",
    "OptResult",
    "INIT_STRATEGIES",
    "TERMINATIONS",
    "init_fields",
    "detect_collapse",
    "minimize",
    # metrics
    "relative_mse",
    "noise_reduction",
    "orthogonality_stats",
    "unit_residual_stats",
    "HistogramPair",
    "error_histogram",
    "QualityReport",
    # plotting
    "quiver_svg",
    "contour_svg",
    "trace_svg",
    # pipelines
    "COMMANDS",
    "resolve_config",
    "load_config_file",
    "run_synth",
    "run_denoise",
    "run_generalize",
    "run_reduce",
    "run_gradcheck",
    "run_eval",
    "gradient_check_sweep",
]
