"""Loss terms A, B, C, the smoothness addend, and their composition."""

import numpy as np
import pytest

from koopreg import (
    CoefficientFields,
    EpsilonPolicy,
    GridSpec,
    MeasurementSet,
    NodalField,
    ShapeError,
    TensorPolynomialBasis,
    SmoothBasisField,
    VectorFieldSamples,
    term_A,
    term_B,
    term_C,
    total_loss,
)

from conftest import constant_samples, coordinate_set, nodal_from_fn


def constant_set(grid, k, value=0.0):
    return MeasurementSet(
        [NodalField(grid, np.full(grid.node_count, value + i)) for i in range(k)]
    )


class TestTermA:
    def test_constant_fields_unit_deficit(self, grid3):
        # zero gradients leave residual -1 at all 9 nodes for both fields
        mset = constant_set(grid3, 2)
        data = constant_samples(grid3, [1.0, 0.0])
        assert term_A(mset, data) == pytest.approx(9.0)

    def test_exact_unit_measurements_vanish(self, grid3):
        mset = coordinate_set(grid3)
        data = constant_samples(grid3, [1.0, 1.0])
        assert term_A(mset, data) == pytest.approx(0.0, abs=1e-15)

    def test_quadrature_scales_with_cell_volume(self):
        g = GridSpec(mins=(0.0, 0.0), spacing=(0.5, 0.5), counts=(3, 3))
        mset = constant_set(g, 1)
        data = constant_samples(g, [1.0, 0.0])
        # same residuals, quarter the cell volume
        assert term_A(mset, data) == pytest.approx(9.0 / 2.0 / 4.0)

    def test_off_grid_data_rejected_for_nodal(self, grid3):
        mset = coordinate_set(grid3)
        pts = np.array([[0.25, 0.25]])
        data = VectorFieldSamples(pts, np.ones((1, 2)))
        with pytest.raises(Exception):
            term_A(mset, data)


class TestTermB:
    def test_parallel_fields(self, grid3):
        f = nodal_from_fn(grid3, lambda p: p[:, 0])
        mset = MeasurementSet([f, f.with_params(f.params)])
        assert term_B(mset) == pytest.approx(4.5, rel=1e-6)

    def test_half_aligned_pair(self, grid3):
        m1 = nodal_from_fn(grid3, lambda p: p[:, 0])
        m2 = nodal_from_fn(grid3, lambda p: p[:, 0] + p[:, 1])
        assert term_B(MeasurementSet([m1, m2])) == pytest.approx(2.25, rel=1e-6)

    def test_orthogonal_fields_zero(self, grid3):
        assert term_B(coordinate_set(grid3)) == pytest.approx(0.0, abs=1e-12)

    def test_single_field_zero(self, grid3):
        mset = MeasurementSet([nodal_from_fn(grid3, lambda p: p[:, 0])])
        assert term_B(mset) == 0.0

    def test_zero_gradients_guarded(self, grid3):
        # both gradients vanish; the epsilon guard must yield 0, not NaN
        mset = constant_set(grid3, 2)
        b = term_B(mset)
        assert np.isfinite(b)
        assert b == pytest.approx(0.0, abs=1e-12)

    def test_scale_invariance(self):
        # gradients kept away from the epsilon guard so the cosine ratio
        # is genuinely scale-free
        rng = np.random.default_rng(21)
        g = GridSpec(mins=(0.0,) * 3, spacing=(1.0,) * 3, counts=(3, 3, 3))
        pts = g.nodes()
        dirs = np.array([[1.0, 0.3, -0.2], [-0.4, 1.0, 0.5], [0.2, -0.6, 1.0]])
        mset = MeasurementSet(
            [
                NodalField(g, pts @ d + 0.05 * rng.normal(size=27))
                for d in dirs
            ]
        )
        base = term_B(mset)
        for c in (0.5, 7.0, 300.0):
            scaled = MeasurementSet([f.with_params(c * f.params) for f in mset])
            assert term_B(scaled) == pytest.approx(base, rel=1e-6)

    def test_permutation_symmetry(self):
        rng = np.random.default_rng(22)
        g = GridSpec(mins=(0.0,) * 3, spacing=(1.0,) * 3, counts=(3, 3, 3))
        fields = [NodalField(g, rng.normal(size=27)) for _ in range(3)]
        base = term_B(MeasurementSet(fields))
        perm = term_B(MeasurementSet([fields[2], fields[0], fields[1]]))
        assert perm == base

    def test_smooth_basis_uses_given_points(self):
        b = TensorPolynomialBasis([0.0, 0.0], [1.0, 1.0], 2)
        rng = np.random.default_rng(23)
        mset = MeasurementSet(
            [SmoothBasisField(b, rng.normal(size=b.size)) for _ in range(2)]
        )
        pts = rng.uniform(0.1, 0.9, size=(30, 2))
        v1 = term_B(mset, points=pts)
        v2 = term_B(mset, points=pts[:5])
        assert np.isfinite(v1) and np.isfinite(v2)
        assert v1 != v2


class TestTermC:
    def test_zero_betas_leave_field_energy(self, grid3):
        mset = coordinate_set(grid3)
        betas = CoefficientFields(
            [NodalField(grid3, np.zeros(9)) for _ in range(2)]
        )
        data = constant_samples(grid3, [1.0, 0.0])
        assert term_C(mset, betas, data) == pytest.approx(4.5)

    def test_exact_span_vanishes(self, grid3):
        # P = 2 grad m1 - 3 grad m2 with beta = (2, -3)
        mset = coordinate_set(grid3)
        betas = CoefficientFields(
            [
                NodalField(grid3, np.full(9, 2.0)),
                NodalField(grid3, np.full(9, -3.0)),
            ]
        )
        data = constant_samples(grid3, [2.0, -3.0])
        assert term_C(mset, betas, data) == pytest.approx(0.0, abs=1e-15)


class TestTotalLoss:
    def test_composition(self, grid3):
        rng = np.random.default_rng(31)
        mset = MeasurementSet(
            [NodalField(grid3, rng.normal(size=9)) for _ in range(2)]
        )
        betas = CoefficientFields(
            [NodalField(grid3, rng.normal(size=9)) for _ in range(2)]
        )
        data = constant_samples(grid3, [1.0, 0.5])
        for alpha in (0.5, 1.0, 10.0):
            bd = total_loss(mset, betas, data, alpha, mode="dr")
            assert bd.alpha == alpha
            assert bd.total == pytest.approx(
                alpha * bd.termA + bd.termB + bd.termC + bd.termS
            )
            assert bd.termA >= 0 and bd.termB >= 0 and bd.termC >= 0

    def test_standard_mode_has_no_term_c(self, grid3):
        mset = coordinate_set(grid3)
        data = constant_samples(grid3, [1.0, 1.0])
        bd = total_loss(mset, None, data, 1.0, mode="standard")
        assert bd.termC == 0.0

    def test_alpha_must_be_positive(self, grid3):
        mset = coordinate_set(grid3)
        data = constant_samples(grid3, [1.0, 1.0])
        with pytest.raises(ShapeError):
            total_loss(mset, None, data, 0.0)

    def test_bad_mode_rejected(self, grid3):
        mset = coordinate_set(grid3)
        data = constant_samples(grid3, [1.0, 1.0])
        with pytest.raises(ShapeError):
            total_loss(mset, None, data, 1.0, mode="banana")

    def test_dr_requires_betas(self, grid3):
        mset = coordinate_set(grid3)
        data = constant_samples(grid3, [1.0, 1.0])
        with pytest.raises(ShapeError):
            total_loss(mset, None, data, 1.0, mode="dr")

    def test_smoothness_counts_only_off_data_nodes(self):
        # 5x5 unit grid; data occupies the nine even-index nodes, leaving 16
        # off-data nodes that carry |grad m|^2 = 1 under m = x1
        g = GridSpec(mins=(0.0, 0.0), spacing=(1.0, 1.0), counts=(5, 5))
        sub = GridSpec(mins=(0.0, 0.0), spacing=(2.0, 2.0), counts=(3, 3))
        mset = MeasurementSet([nodal_from_fn(g, lambda p: p[:, 0])])
        data = constant_samples(sub, [1.0, 0.0])
        sw = 0.125
        bd = total_loss(mset, None, data, 1.0, smoothness_weight=sw)
        assert bd.termA == pytest.approx(0.0, abs=1e-15)
        assert bd.termS == pytest.approx(0.5 * sw * 1.0 * 16)
        assert bd.total == pytest.approx(bd.termS)

    def test_smoothness_zero_when_data_covers_grid(self, grid3):
        mset = coordinate_set(grid3)
        data = constant_samples(grid3, [1.0, 1.0])
        bd = total_loss(mset, None, data, 1.0, smoothness_weight=0.5)
        assert bd.termS == 0.0


class TestEpsilonPolicy:
    def test_default(self):
        assert EpsilonPolicy().eps == pytest.approx(1e-8)

    def test_positive_required(self):
        with pytest.raises(ShapeError):
            EpsilonPolicy(0.0)
