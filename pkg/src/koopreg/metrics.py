"""Quality metrics for restored vector fields.

Two headline percentages, defined here once and reported with their
definitions so the numbers are unambiguous:

* relative MSE % = 100 * sum ||est - ref||^2 / sum ||ref||^2
  (energy-relative squared error);
* noise reduction % = 100 * (1 - RMSE(restored, clean) / RMSE(noisy,
  clean)); 100 means perfect restoration, 0 means no better than the
  noisy input, negative values mean worse.

Plus the geometric diagnostics: pairwise cos^2 statistics between
measurement gradients and the RMS unit-speed residual.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .dynamics import VectorFieldSamples
from .errors import DegenerateReferenceError, ShapeError
from .functional import EpsilonPolicy, MeasurementSet

__all__ = [
    "QualityReport",
    "HistogramPair",
    "relative_mse",
    "noise_reduction",
    "orthogonality_stats",
    "unit_residual_stats",
    "error_histogram",
]


def _match(a: VectorFieldSamples, b: VectorFieldSamples):
    if a.points.shape != b.points.shape:
        raise ShapeError(
            f"sample sets differ in shape: {a.points.shape} vs {b.points.shape}"
        )
    if not np.allclose(a.points, b.points, rtol=1e-9, atol=1e-12):
        raise ShapeError("sample sets are not over the same points")


def relative_mse(est: VectorFieldSamples, ref: VectorFieldSamples) -> float:
    """Energy-relative mean squared error, in percent."""
    _match(est, ref)
    denom = float(np.sum(ref.vectors * ref.vectors))
    if denom == 0.0:
        raise DegenerateReferenceError("reference field is identically zero")
    num = float(np.sum((est.vectors - ref.vectors) ** 2))
    return 100.0 * num / denom


def _rmse(a: VectorFieldSamples, b: VectorFieldSamples) -> float:
    return float(np.sqrt(np.mean((a.vectors - b.vectors) ** 2)))


def noise_reduction(
    noisy: VectorFieldSamples,
    clean: VectorFieldSamples,
    restored: VectorFieldSamples,
) -> float:
    """RMSE-ratio noise reduction, in percent (can be negative)."""
    _match(noisy, clean)
    _match(restored, clean)
    base = _rmse(noisy, clean)
    if base == 0.0:
        raise DegenerateReferenceError("noisy and clean fields coincide")
    return 100.0 * (1.0 - _rmse(restored, clean) / base)


def orthogonality_stats(
    mset: MeasurementSet,
    eps: EpsilonPolicy = EpsilonPolicy(),
    points=None,
):
    """(mean, max) of pairwise cos^2 between measurement gradients.

    Nodal sets evaluate on their own grid; smooth-basis sets at the given
    points (basis reference points by default).
    """
    if mset.count < 2:
        raise ShapeError("orthogonality needs at least two fields")
    if mset.is_nodal:
        pts = mset[0].grid.nodes()
    else:
        pts = points if points is not None else mset[0].basis.reference_points()
    grads = mset.gradients_at(pts)
    norms = [np.einsum("pa,pa->p", g, g) + eps.eps for g in grads]
    cos2 = []
    for i in range(mset.count):
        for j in range(i + 1, mset.count):
            u = np.einsum("pa,pa->p", grads[i], grads[j])
            cos2.append(u * u / (norms[i] * norms[j]))
    allc = np.concatenate(cos2)
    return float(np.mean(allc)), float(np.max(allc))


def unit_residual_stats(mset: MeasurementSet, data: VectorFieldSamples) -> float:
    """RMS over points and fields of the unit-speed residual grad m . P - 1."""
    grads = mset.gradients_at(data.points)
    resid = np.einsum("kpa,pa->kp", grads, data.vectors) - 1.0
    return float(np.sqrt(np.mean(resid * resid)))


@dataclass(frozen=True)
class HistogramPair:
    """Before/after error histograms over one shared bin range."""

    bin_edges: np.ndarray
    counts_before: np.ndarray
    counts_after: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "count_before", "count_after"])
            for i in range(len(self.counts_before)):
                w.writerow(
                    [
                        repr(float(self.bin_edges[i])),
                        repr(float(self.bin_edges[i + 1])),
                        int(self.counts_before[i]),
                        int(self.counts_after[i]),
                    ]
                )

    def to_json_dict(self) -> dict:
        return {
            "bin_edges": self.bin_edges.tolist(),
            "counts_before": self.counts_before.tolist(),
            "counts_after": self.counts_after.tolist(),
        }


def error_histogram(before, after, bins: int = 30) -> HistogramPair:
    """Shared-range binning of per-component errors before and after."""
    if bins < 1:
        raise ShapeError("bins must be at least 1")
    b = np.asarray(before, dtype=float).reshape(-1)
    a = np.asarray(after, dtype=float).reshape(-1)
    lo = min(b.min(), a.min())
    hi = max(b.max(), a.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts_b, edges = np.histogram(b, bins=bins, range=(lo, hi))
    counts_a, _ = np.histogram(a, bins=bins, range=(lo, hi))
    return HistogramPair(
        bin_edges=edges, counts_before=counts_b, counts_after=counts_a
    )


@dataclass(frozen=True)
class QualityReport:
    """All metrics of one experiment, None where not applicable."""

    relative_mse_pct: float | None = None
    noise_reduction_pct: float | None = None
    mean_cos2: float | None = None
    max_cos2: float | None = None
    unit_residual_rms: float | None = None
    histograms: HistogramPair | None = None

    definitions = {
        "relative_mse_pct": "100 * sum||est-ref||^2 / sum||ref||^2",
        "noise_reduction_pct": "100 * (1 - RMSE(restored,clean)/RMSE(noisy,clean))",
    }

    def to_json_dict(self) -> dict:
        d = {
            "relative_mse_pct": self.relative_mse_pct,
            "noise_reduction_pct": self.noise_reduction_pct,
            "mean_cos2": self.mean_cos2,
            "max_cos2": self.max_cos2,
            "unit_residual_rms": self.unit_residual_rms,
            "definitions": dict(self.definitions),
        }
        if self.histograms is not None:
            d["histograms"] = self.histograms.to_json_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)
