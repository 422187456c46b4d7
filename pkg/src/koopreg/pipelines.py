"""End-to-end experiment pipelines: synth, denoise, generalize, reduce,
gradcheck, eval.

Each pipeline is a plain function over a resolved configuration dict
(see :func:`resolve_config`) that writes its artifacts into the output
directory and returns the interesting objects, so scripts and tests can
drive experiments without going through a subprocess.  The CLI module is
a thin argv adapter over these functions.

All outputs are deterministic for a fixed config and seed: CSV floats
round-trip bit-for-bit, JSON keys are sorted, SVGs embed no timestamps.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .dynamics import (
    NoiseSpec,
    VectorFieldSamples,
    add_noise,
    extract_segment,
    integrate_orbit,
    planar_window,
    sample_grid,
    system_by_name,
)
from .errors import (
    ConfigError,
    DomainError,
    OptimizationDiverged,
    UnderdeterminedError,
)
from .field import (
    GridSpec,
    NodalField,
    SmoothBasisField,
    TensorPolynomialBasis,
    GaussianRBFBasis,
    field_to_json,
)
from .functional import (
    CoefficientFields,
    EpsilonPolicy,
    LossAssembly,
    MeasurementSet,
)
from .gradients import grad_fd_oracle
from .metrics import (
    QualityReport,
    error_histogram,
    noise_reduction,
    orthogonality_stats,
    relative_mse,
    unit_residual_stats,
)
from .optimizer import OptimConfig, init_fields, minimize
from .reconstruct import reconstruct_full, reconstruct_reduced, solve_betas
from .svgplot import contour_svg, quiver_svg, trace_svg

__all__ = [
    "resolve_config",
    "load_config_file",
    "run_synth",
    "run_denoise",
    "run_generalize",
    "run_reduce",
    "run_gradcheck",
    "run_eval",
    "gradient_check_sweep",
    "COMMANDS",
]


# Configuration ---------------------------------------------------------------


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, str):
        low = v.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _as_floats(v) -> list:
    if isinstance(v, str):
        v = [p for p in v.split(",") if p.strip()]
    if not isinstance(v, (list, tuple)):
        raise ConfigError(f"expected a list of numbers, got {v!r}")
    return [float(x) for x in v]


def _as_dict(v) -> dict:
    if isinstance(v, str):
        v = json.loads(v)
    if not isinstance(v, dict):
        raise ConfigError(f"expected a mapping, got {v!r}")
    return v


def _opt(cast):
    return lambda v: None if v is None else cast(v)


_COMMON = {
    "out": (".", str),
    "seed": (0, int),
    "threads": (None, _opt(int)),
    "quiet": (False, _as_bool),
    "plots": (True, _as_bool),
}

_OPTIM = {
    "alpha0": (10.0, float),
    "alpha_up": (2.0, float),
    "alpha_down": (0.5, float),
    "alpha_min": (0.1, float),
    "alpha_max": (1e4, float),
    "step0": (1e-2, float),
    "max_iters": (20000, int),
    "stall_window": (200, int),
    "rel_tol": (1e-6, float),
    "collapse_var_tol": (None, _opt(float)),
    "smoothness_weight": (None, _opt(float)),
    "eps": (1e-8, float),
    "init": ("coordinate_ramps", str),
    "log_stride": (10, int),
    "checkpoint_stride": (0, int),
}

SCHEMAS = {
    "synth": {
        **_COMMON,
        "system": (None, _opt(str)),
        "system_params": ({}, _as_dict),
        "domain_min": ([6.0, -3.0], _as_floats),
        "domain_max": ([12.0, 3.0], _as_floats),
        "dx": (0.1, float),
        "noise_std": (0.1, float),
        "noise_mean": (0.0, float),
        "x0": ([1.0, 1.0, 1.0], _as_floats),
        "dt": (0.01, float),
        "steps": (5000, int),
        "window": (300, int),
    },
    "denoise": {
        **_COMMON,
        **_OPTIM,
        "noisy": (None, _opt(str)),
        "clean": (None, _opt(str)),
        "k": (None, _opt(int)),
        "representation": ("smooth_basis", str),
        "degree": (4, int),
        "bins": (30, int),
        "plot_stride": (4, int),
    },
    "generalize": {
        **_COMMON,
        **_OPTIM,
        # In-fill wants orthogonality to lead early: a softer fidelity weight
        # lets stray parallel-gradient bands relax before they freeze in, and
        # the longer budget covers the healing phase.
        "alpha0": (3.0, float),
        "max_iters": (60000, int),
        "sparse": (None, _opt(str)),
        "reference": (None, _opt(str)),
        "system": (None, _opt(str)),
        "system_params": ({}, _as_dict),
        "domain_min": ([6.0, -3.0], _as_floats),
        "domain_max": ([12.0, 3.0], _as_floats),
        "dx": (0.1, float),
        "representation": ("smooth_basis", str),
        "degree": (4, int),
        "k": (None, _opt(int)),
        "plot_stride": (4, int),
    },
    "reduce": {
        **_COMMON,
        **_OPTIM,
        # Short scattered segments carry few samples; quadratic fields keep
        # the fit overdetermined, and the reduced span needs the long budget.
        "max_iters": (60000, int),
        "samples": (None, _opt(str)),
        "k": (2, int),
        "representation": ("tensor_poly", str),
        "degree": (2, int),
        "rbf_width": (None, _opt(float)),
        "rbf_centers": (64, int),
    },
    "gradcheck": {
        **_COMMON,
        "seeds": (20, int),
        "h": (1e-5, float),
        "tol": (1e-5, float),
    },
    "eval": {
        **_COMMON,
        "est": (None, _opt(str)),
        "ref": (None, _opt(str)),
        "noisy": (None, _opt(str)),
        "clean": (None, _opt(str)),
        "restored": (None, _opt(str)),
        "bins": (30, int),
    },
}

COMMANDS = tuple(SCHEMAS)


def load_config_file(path) -> dict:
    """Read a JSON or TOML config file into a flat dict."""
    p = Path(path)
    text = p.read_text()
    if p.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            try:
                import tomli as tomllib
            except ModuleNotFoundError:
                raise ConfigError(
                    "TOML configs need Python 3.11+ or the tomli package; "
                    "use JSON instead"
                )
        return tomllib.loads(text)
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})")
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return d


def resolve_config(command: str, file_cfg: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge defaults, config-file values, and flag overrides for a command.

    Unknown keys are rejected rather than ignored, so typos fail fast.
    """
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = SCHEMAS[command]
    merged = {k: default for k, (default, _) in schema.items()}
    for source, name in ((file_cfg, "config file"), (overrides, "flags")):
        if not source:
            continue
        unknown = sorted(set(source) - set(schema))
        if unknown:
            raise ConfigError(
                f"unknown {name} keys for {command}: {', '.join(unknown)}"
            )
        for k, v in source.items():
            if v is None:
                continue
            try:
                merged[k] = schema[k][1](v)
            except (ValueError, TypeError, json.JSONDecodeError) as e:
                raise ConfigError(f"bad value for {k}: {v!r} ({e})")
    return merged


# Small shared helpers ---------------------------------------------------------


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(cfg, msg: str) -> None:
    if not cfg.get("quiet"):
        print(msg)


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out: Path, command: str, cfg: dict, outputs: list, extra=None) -> dict:
    manifest = {
        "command": command,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "outputs": sorted(str(p) for p in outputs),
    }
    if extra:
        manifest.update(extra)
    _write_json(out / "manifest.json", manifest)
    return manifest


def _optim_config(cfg, smoothness_default: float = 0.0) -> OptimConfig:
    sw = cfg["smoothness_weight"]
    return OptimConfig(
        alpha0=cfg["alpha0"],
        alpha_up=cfg["alpha_up"],
        alpha_down=cfg["alpha_down"],
        alpha_min=cfg["alpha_min"],
        alpha_max=cfg["alpha_max"],
        step0=cfg["step0"],
        max_iters=cfg["max_iters"],
        stall_window=cfg["stall_window"],
        rel_tol=cfg["rel_tol"],
        collapse_var_tol=cfg["collapse_var_tol"],
        smoothness_weight=smoothness_default if sw is None else sw,
        seed=cfg["seed"],
    )


class _RunLogger:
    """JSON-lines run log plus optional field checkpoints.

    Rows are buffered so the initial-state row (only known once the run
    returns) can lead the file; close() flushes everything in order.
    """

    def __init__(self, out: Path, cfg, init: MeasurementSet):
        self.path = out / "run_log.jsonl"
        self.stride = max(1, cfg["log_stride"])
        self.ck_stride = cfg["checkpoint_stride"]
        self.ck_dir = out / "checkpoints"
        self.init = init
        self.m_size = sum(f.params.size for f in init.fields)
        self.rows = []

    def first(self, breakdown, alpha, step):
        self.rows.insert(0, self._row(0, breakdown, step))

    def __call__(self, it, breakdown, alpha, step, theta):
        if it % self.stride == 0:
            self.rows.append(self._row(it, breakdown, step))
        if self.ck_stride and it % self.ck_stride == 0:
            self.ck_dir.mkdir(exist_ok=True)
            mset = self.init.with_params_concat(theta[: self.m_size])
            for i, f in enumerate(mset):
                p = self.ck_dir / f"iter_{it:06d}_m{i + 1}.json"
                p.write_text(field_to_json(f))

    @staticmethod
    def _row(it, breakdown, step):
        row = {"iter": it, "step": step}
        row.update(breakdown.to_json_dict())
        return row

    def close(self):
        with open(self.path, "w") as fh:
            for row in self.rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def _subsample(samples: VectorFieldSamples, stride: int) -> VectorFieldSamples:
    if stride <= 1:
        return samples
    return VectorFieldSamples(
        points=samples.points[::stride], vectors=samples.vectors[::stride]
    )


def _field_as_nodal(f, grid: GridSpec) -> NodalField:
    if isinstance(f, NodalField):
        return f
    return NodalField(grid, f.values_at(grid.nodes()))


def _save_fields(out: Path, mset, prefix: str, outputs: list) -> None:
    for i, f in enumerate(mset):
        p = out / f"{prefix}{i + 1}.json"
        p.write_text(field_to_json(f))
        outputs.append(p)


def _require(cfg, key: str, hint: str) -> str:
    v = cfg.get(key)
    if not v:
        raise ConfigError(f"missing required setting {key!r} ({hint})")
    return v


# synth -------------------------------------------------------------------------


def run_synth(cfg: dict) -> dict:
    """Sample a built-in system: lattice CSVs, or a Lorenz orbit + segment."""
    out = _out_dir(cfg)
    name = _require(cfg, "system", "e.g. lin-imaginary, nonlinear, lorenz")
    system = system_by_name(name, **cfg["system_params"])
    outputs = []
    extra = {}

    if system.dim == 3:
        orbit = integrate_orbit(system, cfg["x0"], cfg["dt"], cfg["steps"])
        opath = out / "orbit.csv"
        with open(opath, "w", newline="") as fh:
            fh.write(",".join(f"x{i + 1}" for i in range(orbit.shape[1])) + "\n")
            for row in orbit:
                fh.write(",".join(repr(float(c)) for c in row) + "\n")
        outputs.append(opath)
        start, end, ratio = planar_window(orbit, cfg["window"])
        segment = extract_segment(system, orbit, start, end)
        spath = out / "segment.csv"
        segment.to_csv(spath)
        outputs.append(spath)
        extra["window"] = {"start": start, "end": end, "planarity_ratio": ratio}
        _say(cfg, f"orbit of {len(orbit)} states; planar window [{start}, {end})")
    else:
        grid = GridSpec.from_box(cfg["domain_min"], cfg["domain_max"], cfg["dx"])
        clean = sample_grid(system, grid)
        cpath = out / "clean.csv"
        clean.to_csv(cpath)
        outputs.append(cpath)
        if cfg["noise_std"] > 0:
            spec = NoiseSpec(
                std=cfg["noise_std"], mean=cfg["noise_mean"], seed=cfg["seed"]
            )
            noisy = add_noise(clean, spec)
            npath = out / "noisy.csv"
            noisy.to_csv(npath)
            outputs.append(npath)
        _say(cfg, f"sampled {clean.count} points of {name} at dx={cfg['dx']}")

    return _write_manifest(out, "synth", cfg, outputs, extra)


# denoise -----------------------------------------------------------------------


def run_denoise(cfg: dict):
    """Learn unit measurements on the noisy lattice, restore P through them."""
    out = _out_dir(cfg)
    noisy = VectorFieldSamples.from_csv(_require(cfg, "noisy", "noisy samples csv"))
    if noisy.layout is None:
        raise DomainError("denoising expects samples on a full lattice")
    clean = None
    if cfg["clean"]:
        clean = VectorFieldSamples.from_csv(cfg["clean"])
    grid = noisy.layout
    n = noisy.dim
    k = cfg["k"] if cfg["k"] is not None else n
    oc = _optim_config(cfg, smoothness_default=0.0)
    eps = EpsilonPolicy(cfg["eps"])
    rep = cfg["representation"]
    if rep == "smooth_basis":
        # Low-order polynomial measurements cannot absorb per-node noise, so
        # the fit is forced toward the coherent part of the field.
        basis = TensorPolynomialBasis(grid.mins, grid.maxs, cfg["degree"])
        init = init_fields(basis, n, k, cfg["init"], noisy, cfg["seed"])
    elif rep == "nodal":
        init = init_fields(grid, n, k, cfg["init"], noisy, cfg["seed"])
    else:
        raise ConfigError(f"unknown representation {rep!r}")

    logger = _RunLogger(out, cfg, init)
    try:
        result = minimize(
            noisy, oc, mode="standard", k=k, init=init, eps=eps, callback=logger
        )
        logger.first(result.history[0], result.alpha_trace[0], oc.step0)
    finally:
        logger.close()
    _say(
        cfg,
        f"optimization: {result.termination} after {result.iters} iterations, "
        f"total {result.history[-1].total:.6g}",
    )

    outputs = [logger.path]
    restored = reconstruct_full(result.mset, grid)
    rpath = out / "restored.csv"
    restored.to_csv(rpath)
    outputs.append(rpath)
    _save_fields(out, result.mset, "m", outputs)

    mean_c2 = max_c2 = None
    if k >= 2:
        mean_c2, max_c2 = orthogonality_stats(result.mset, eps)
    nr = rel = hist = None
    if clean is not None:
        nr = noise_reduction(noisy, clean, restored)
        rel = relative_mse(restored, clean)
        hist = error_histogram(
            noisy.vectors - clean.vectors,
            restored.vectors - clean.vectors,
            cfg["bins"],
        )
        hpath = out / "histograms.csv"
        hist.to_csv(hpath)
        outputs.append(hpath)
        _say(cfg, f"noise reduction {nr:.1f}%, relative MSE {rel:.2f}%")
    report = QualityReport(
        relative_mse_pct=rel,
        noise_reduction_pct=nr,
        mean_cos2=mean_c2,
        max_cos2=max_c2,
        unit_residual_rms=unit_residual_stats(result.mset, noisy),
        histograms=hist,
    )
    (out / "report.json").write_text(report.to_json() + "\n")
    outputs.append(out / "report.json")

    if cfg["plots"] and n == 2:
        stride = max(1, cfg["plot_stride"])
        layers = [(_subsample(noisy, stride), "blue")]
        if clean is not None:
            layers.append((_subsample(clean, stride), "black"))
        layers.append((_subsample(restored, stride), "red"))
        quiver_svg(layers, out / "quiver.svg")
        outputs.append(out / "quiver.svg")
        for i, f in enumerate(result.mset):
            p = out / f"contour_m{i + 1}.svg"
            contour_svg(_field_as_nodal(f, grid), path=p)
            outputs.append(p)

    _write_manifest(
        out,
        "denoise",
        cfg,
        outputs,
        {"termination": result.termination, "iters": result.iters},
    )
    if result.termination == "diverged":
        raise OptimizationDiverged("denoising run diverged; artifacts retained")
    return result, report


# generalize ----------------------------------------------------------------------


def run_generalize(cfg: dict):
    """In-fill a sparse lattice to a dense grid through learned measurements."""
    out = _out_dir(cfg)
    sparse = VectorFieldSamples.from_csv(_require(cfg, "sparse", "sparse samples csv"))
    n = sparse.dim
    k = cfg["k"] if cfg["k"] is not None else n
    dense = GridSpec.from_box(cfg["domain_min"], cfg["domain_max"], cfg["dx"])
    if dense.dim != n:
        raise ConfigError(f"domain is {dense.dim}-D but samples are {n}-D")
    eps = EpsilonPolicy(cfg["eps"])

    rep = cfg["representation"]
    if rep == "smooth_basis":
        basis = TensorPolynomialBasis(cfg["domain_min"], cfg["domain_max"], cfg["degree"])
        if basis.size > sparse.count:
            raise UnderdeterminedError(
                f"{basis.size} coefficients per field but only {sparse.count} samples"
            )
        init = init_fields(basis, n, k, cfg["init"], sparse, cfg["seed"])
        oc = _optim_config(cfg, smoothness_default=0.0)
        geometry = dense
    elif rep == "nodal":
        init = init_fields(dense, n, k, cfg["init"], sparse, cfg["seed"])
        oc = _optim_config(cfg, smoothness_default=1e-3)
        geometry = None
    else:
        raise ConfigError(f"unknown representation {rep!r}")

    logger = _RunLogger(out, cfg, init)
    try:
        result = minimize(
            sparse,
            oc,
            mode="standard",
            k=k,
            init=init,
            eps=eps,
            geometry=geometry,
            callback=logger,
        )
        logger.first(result.history[0], result.alpha_trace[0], oc.step0)
    finally:
        logger.close()
    _say(
        cfg,
        f"optimization: {result.termination} after {result.iters} iterations, "
        f"total {result.history[-1].total:.6g}",
    )

    outputs = [logger.path]
    restored = reconstruct_full(result.mset, dense)
    gpath = out / "generalized.csv"
    restored.to_csv(gpath)
    outputs.append(gpath)
    _save_fields(out, result.mset, "m", outputs)

    reference = None
    if cfg["reference"]:
        reference = VectorFieldSamples.from_csv(cfg["reference"])
    elif cfg["system"]:
        reference = sample_grid(
            system_by_name(cfg["system"], **cfg["system_params"]), dense
        )
    rel = None
    if reference is not None:
        rel = relative_mse(restored, reference)
        _say(cfg, f"relative MSE {rel:.3f}% on the dense grid")
    mean_c2 = max_c2 = None
    if k >= 2:
        pts = None if init.is_nodal else dense.nodes()
        mean_c2, max_c2 = orthogonality_stats(result.mset, eps, points=pts)
    report = QualityReport(
        relative_mse_pct=rel,
        mean_cos2=mean_c2,
        max_cos2=max_c2,
        unit_residual_rms=unit_residual_stats(result.mset, sparse),
    )
    (out / "report.json").write_text(report.to_json() + "\n")
    outputs.append(out / "report.json")

    if cfg["plots"] and n == 2:
        stride = max(1, cfg["plot_stride"])
        layers = [(sparse, "blue")]
        if reference is not None:
            layers.insert(0, (_subsample(reference, stride), "black"))
        layers.append((_subsample(restored, stride), "red"))
        quiver_svg(layers, out / "quiver.svg")
        outputs.append(out / "quiver.svg")
        for i, f in enumerate(result.mset):
            p = out / f"contour_m{i + 1}.svg"
            contour_svg(_field_as_nodal(f, dense), path=p)
            outputs.append(p)

    _write_manifest(
        out,
        "generalize",
        cfg,
        outputs,
        {"termination": result.termination, "iters": result.iters},
    )
    if result.termination == "diverged":
        raise OptimizationDiverged("generalization run diverged; artifacts retained")
    return result, report


# reduce --------------------------------------------------------------------------


def _pca_plane(points: np.ndarray):
    center = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - center, full_matrices=False)
    return center, vt[:2]


def _project_samples(samples: VectorFieldSamples, center, axes) -> VectorFieldSamples:
    pts = (samples.points - center) @ axes.T
    vec = samples.vectors @ axes.T
    return VectorFieldSamples(points=pts, vectors=vec)


def run_reduce(cfg: dict):
    """Represent scattered 3-D samples with K < N measurements (DR mode)."""
    out = _out_dir(cfg)
    data = VectorFieldSamples.from_csv(_require(cfg, "samples", "scattered samples csv"))
    k = cfg["k"]
    if k < 1:
        raise ConfigError("K must be at least 1")
    if k > data.dim:
        raise ConfigError(f"K={k} exceeds the state dimension {data.dim}")
    eps = EpsilonPolicy(cfg["eps"])

    # Fast flows make beta ~ |P|^2 while unit measurements keep |grad m| ~
    # 1/|P|, a stiffness that starves gradient descent.  Optimizing against
    # the speed-normalized field and rescaling the measurements afterwards
    # is exact: m solves the unit equation for P iff speed*m solves it for
    # P/speed.  All reported metrics use the raw samples.
    speed = float(np.sqrt(np.mean(np.sum(data.vectors**2, axis=1))))
    if not speed > 0:
        speed = 1.0
    scaled = VectorFieldSamples(data.points, data.vectors / speed)

    lo = data.points.min(axis=0)
    hi = data.points.max(axis=0)
    pad = 0.05 * np.where(hi > lo, hi - lo, 1.0)
    rep = cfg["representation"]
    if rep == "tensor_poly":
        basis = TensorPolynomialBasis(lo - pad, hi + pad, cfg["degree"])
    elif rep == "rbf":
        m = min(cfg["rbf_centers"], data.count)
        idx = np.linspace(0, data.count - 1, m).round().astype(int)
        centers = data.points[idx]
        width = cfg["rbf_width"]
        if width is None:
            width = 0.5 * float(np.max(hi - lo)) / max(np.sqrt(m), 1.0) * 3.0
        basis = GaussianRBFBasis(centers, width)
    else:
        raise ConfigError(f"unknown representation {rep!r}")

    init = init_fields(basis, data.dim, k, cfg["init"], scaled, cfg["seed"])
    oc = _optim_config(cfg, smoothness_default=0.0)
    logger = _RunLogger(out, cfg, init)
    try:
        result = minimize(
            scaled, oc, mode="dr", k=k, init=init, eps=eps, callback=logger
        )
        logger.first(result.history[0], result.alpha_trace[0], oc.step0)
    finally:
        logger.close()
    _say(
        cfg,
        f"optimization: {result.termination} after {result.iters} iterations, "
        f"total {result.history[-1].total:.6g}",
    )

    outputs = [logger.path]
    mset = result.mset.with_params_concat(result.mset.params_concat() / speed)
    betas = solve_betas(mset, data)
    restored = reconstruct_reduced(mset, betas, data.points)
    rpath = out / "restored.csv"
    restored.to_csv(rpath)
    outputs.append(rpath)
    _save_fields(out, mset, "m", outputs)
    _save_fields(out, betas, "beta", outputs)

    rel = relative_mse(restored, data)
    mean_c2 = max_c2 = None
    if k >= 2:
        mean_c2, max_c2 = orthogonality_stats(mset, eps, points=data.points)
    report = QualityReport(
        relative_mse_pct=rel,
        mean_cos2=mean_c2,
        max_cos2=max_c2,
        unit_residual_rms=unit_residual_stats(mset, data),
    )
    (out / "report.json").write_text(report.to_json() + "\n")
    outputs.append(out / "report.json")
    _say(cfg, f"relative MSE {rel:.3f}% over the segment")

    if cfg["plots"]:
        grads = mset.gradients_at(data.points)
        resid = np.einsum("kpa,pa->kp", grads, data.vectors)
        palette = ["blue", "red", "green"]
        series = [
            (f"grad m{i + 1} . P", resid[i], palette[i % 3]) for i in range(k)
        ]
        trace_svg(series, out / "residual_trace.svg")
        outputs.append(out / "residual_trace.svg")
        if k >= 2:
            norms = [np.einsum("pa,pa->p", g, g) + eps.eps for g in grads]
            cs = []
            for i in range(k):
                for j in range(i + 1, k):
                    u = np.einsum("pa,pa->p", grads[i], grads[j])
                    cs.append((f"cos2 {i + 1}{j + 1}", u * u / (norms[i] * norms[j])))
            trace_svg(
                [(nm, arr, palette[t % 3]) for t, (nm, arr) in enumerate(cs)],
                out / "cos2_trace.svg",
            )
            outputs.append(out / "cos2_trace.svg")
        center, axes = _pca_plane(data.points)
        quiver_svg(
            [
                (_project_samples(data, center, axes), "blue"),
                (_project_samples(restored, center, axes), "red"),
            ],
            out / "overlay.svg",
        )
        outputs.append(out / "overlay.svg")

    _write_manifest(
        out,
        "reduce",
        cfg,
        outputs,
        {"termination": result.termination, "iters": result.iters},
    )
    if result.termination == "diverged":
        raise OptimizationDiverged("reduction run diverged; artifacts retained")
    return result, report


# gradcheck -------------------------------------------------------------------------


def _gradcheck_case(rng, mode, rep, k, n, h):
    """One randomized exact-vs-FD gradient comparison; returns rel Linf error."""
    from .field import GridSpec as _GS

    if rep == "nodal":
        counts = (5, 5) if n == 2 else (4, 4, 4)
        grid = _GS(mins=(0.0,) * n, spacing=tuple(1.0 / (c - 1) for c in counts), counts=counts)
        fields = [NodalField(grid, rng.normal(size=grid.node_count)) for _ in range(k)]
        mset = MeasurementSet(fields)
        # alternate between data on the full grid and on a coarser
        # sub-lattice (the generalization layout, with smoothness on)
        sub = bool(rng.integers(0, 2))
        if sub:
            dgrid = _GS(
                mins=grid.mins,
                spacing=tuple(2 * h_ for h_ in grid.spacing),
                counts=tuple((c + 1) // 2 for c in counts),
            )
            pts = dgrid.nodes()
            layout = dgrid
            sw = 1e-3
        else:
            pts = grid.nodes()
            layout = grid
            sw = 0.0
        data = VectorFieldSamples(
            points=pts, vectors=rng.normal(size=(len(pts), n)), layout=layout
        )
        geometry = None
        betas = None
        if mode == "dr":
            betas = CoefficientFields(
                [NodalField(grid, rng.normal(size=grid.node_count)) for _ in range(k)]
            )
    else:
        basis = TensorPolynomialBasis((0.0,) * n, (1.0,) * n, degree=2)
        fields = [SmoothBasisField(basis, rng.normal(size=basis.size)) for _ in range(k)]
        mset = MeasurementSet(fields)
        pts = rng.uniform(0.05, 0.95, size=(12, n))
        data = VectorFieldSamples(points=pts, vectors=rng.normal(size=(12, n)))
        use_grid_geom = bool(rng.integers(0, 2))
        geometry = (
            _GS(mins=(0.0,) * n, spacing=(0.5,) * n, counts=(3,) * n)
            if use_grid_geom
            else None
        )
        sw = 1e-3 if use_grid_geom else 0.0
        betas = None
        if mode == "dr":
            betas = CoefficientFields(
                [SmoothBasisField(basis, rng.normal(size=basis.size)) for _ in range(k)]
            )

    alpha = 0.5 + 2.0 * rng.random()
    asm = LossAssembly(
        mset,
        data,
        betas=betas,
        mode=mode,
        eps=EpsilonPolicy(),
        smoothness_weight=sw,
        geometry=geometry,
    )
    theta = asm.pack()
    _, exact = asm.loss_and_grad(theta, alpha)
    fd = grad_fd_oracle(lambda p: asm.loss(p, alpha).total, theta, h)
    denom = max(float(np.max(np.abs(fd))), 1e-12)
    diff = np.abs(exact - fd)
    return float(np.max(diff)) / denom, int(np.argmax(diff))


def gradient_check_sweep(seeds: int = 20, h: float = 1e-5) -> dict:
    """Exact-vs-FD gradient sweep across modes, representations, K and N.

    Returns the worst relative Linf error with the case that produced it.
    """
    combos = [(kk, nn) for nn in (2, 3) for kk in (1, 2, 3) if kk <= nn]
    worst = {"max_rel_err": 0.0, "argmax_param": None, "seeds": seeds, "cases": 0}
    for seed in range(seeds):
        for mi, mode in enumerate(("standard", "dr")):
            for ri, rep in enumerate(("nodal", "smooth")):
                for ci, (k, n) in enumerate(combos):
                    rng = np.random.default_rng(
                        1_000_003 * seed + 100 * mi + 10 * ri + ci
                    )
                    err, arg = _gradcheck_case(rng, mode, rep, k, n, h)
                    worst["cases"] += 1
                    if err > worst["max_rel_err"]:
                        worst["max_rel_err"] = err
                        worst["argmax_param"] = {
                            "seed": seed,
                            "mode": mode,
                            "representation": rep,
                            "k": k,
                            "n": n,
                            "param_index": arg,
                        }
    return worst


def run_gradcheck(cfg: dict) -> dict:
    """Randomized gradient validation; report written as JSON."""
    out = _out_dir(cfg)
    report = gradient_check_sweep(seeds=cfg["seeds"], h=cfg["h"])
    report["tol"] = cfg["tol"]
    report["passed"] = report["max_rel_err"] <= cfg["tol"]
    _write_json(out / "gradcheck.json", report)
    _write_manifest(out, "gradcheck", cfg, [out / "gradcheck.json"])
    _say(
        cfg,
        f"gradcheck over {report['cases']} cases: max relative error "
        f"{report['max_rel_err']:.3g} ({'pass' if report['passed'] else 'FAIL'})",
    )
    return report


# eval ---------------------------------------------------------------------------


def run_eval(cfg: dict):
    """Metrics over existing CSV artifacts, without re-optimizing."""
    out = _out_dir(cfg)
    outputs = []
    rel = nr = hist = None
    have_pair = cfg["est"] and cfg["ref"]
    have_triple = cfg["noisy"] and cfg["clean"] and cfg["restored"]
    if not (have_pair or have_triple):
        raise ConfigError(
            "eval needs est+ref (relative MSE) and/or noisy+clean+restored "
            "(noise reduction)"
        )
    if have_pair:
        est = VectorFieldSamples.from_csv(cfg["est"])
        ref = VectorFieldSamples.from_csv(cfg["ref"])
        rel = relative_mse(est, ref)
        _say(cfg, f"relative MSE {rel:.4f}%")
    if have_triple:
        noisy = VectorFieldSamples.from_csv(cfg["noisy"])
        clean = VectorFieldSamples.from_csv(cfg["clean"])
        restored = VectorFieldSamples.from_csv(cfg["restored"])
        nr = noise_reduction(noisy, clean, restored)
        hist = error_histogram(
            noisy.vectors - clean.vectors,
            restored.vectors - clean.vectors,
            cfg["bins"],
        )
        hist.to_csv(out / "histograms.csv")
        outputs.append(out / "histograms.csv")
        _say(cfg, f"noise reduction {nr:.2f}%")
    report = QualityReport(
        relative_mse_pct=rel, noise_reduction_pct=nr, histograms=hist
    )
    (out / "report.json").write_text(report.to_json() + "\n")
    outputs.append(out / "report.json")
    _write_manifest(out, "eval", cfg, outputs)
    return report
