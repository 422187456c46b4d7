"""Grids, scalar fields, discrete calculus, and serialization."""

import json

import numpy as np
import pytest

from koopreg import (
    DomainError,
    GaussianRBFBasis,
    GridSpec,
    NodalField,
    ShapeError,
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

from conftest import nodal_from_fn


class TestGridSpec:
    def test_from_box_counts_and_bounds(self):
        g = GridSpec.from_box([6.0, -3.0], [12.0, 3.0], 0.1)
        assert g.counts == (61, 61)
        assert g.node_count == 3721
        assert g.maxs == pytest.approx((12.0, 3.0))

    def test_nodes_are_lexicographic(self, grid3):
        pts = grid3.nodes()
        assert pts.shape == (9, 2)
        # first axis varies slowest
        assert list(pts[0]) == [0.0, 0.0]
        assert list(pts[1]) == [0.0, 1.0]
        assert list(pts[3]) == [1.0, 0.0]

    def test_rejects_single_node_axis(self):
        with pytest.raises(ShapeError):
            GridSpec(mins=(0.0,), spacing=(1.0,), counts=(1,))

    def test_rejects_nonpositive_spacing(self):
        with pytest.raises(ShapeError):
            GridSpec(mins=(0.0,), spacing=(0.0,), counts=(3,))

    def test_cell_volume(self, grid3):
        assert grid3.cell_volume == pytest.approx(1.0)

    def test_json_round_trip(self, grid3):
        again = GridSpec.from_json_dict(grid3.to_json_dict())
        assert again == grid3

    def test_infer_grid_round_trip(self):
        g = GridSpec.from_box([6.0, -3.0], [12.0, 3.0], 1.0)
        inferred = infer_grid(g.nodes())
        assert inferred == g

    def test_infer_grid_rejects_scattered(self):
        rng = np.random.default_rng(0)
        assert infer_grid(rng.random((40, 3))) is None


class TestBoundingBox:
    def test_volume(self):
        pts = np.array([[0.0, 0.0], [2.0, 3.0], [1.0, 1.0]])
        assert bounding_box_volume(pts) == pytest.approx(6.0)

    def test_zero_extent_axis_counts_as_one(self):
        pts = np.array([[0.0, 5.0], [2.0, 5.0]])
        assert bounding_box_volume(pts) == pytest.approx(2.0)


class TestAxisDifference:
    def test_quadratic_oracle_1d(self):
        # m = x^2 on {0,1,2}: central at 1 -> 2, one-sided at edges -> 1, 3
        vals = np.array([0.0, 1.0, 4.0]).reshape(3)
        d = axis_difference(vals, 0, 1.0)
        assert d[1] == pytest.approx(2.0)
        assert d[0] == pytest.approx(1.0)
        assert d[2] == pytest.approx(3.0)

    def test_linear_exact_everywhere(self, grid3):
        pts = grid3.nodes()
        vals = (2.0 * pts[:, 0] - pts[:, 1]).reshape(grid3.counts)
        assert np.allclose(axis_difference(vals, 0, 1.0), 2.0)
        assert np.allclose(axis_difference(vals, 1, 1.0), -1.0)

    def test_adjoint_identity(self):
        rng = np.random.default_rng(7)
        for shape, ax, h in (((5,), 0, 0.3), ((4, 6), 1, 0.7), ((3, 4, 5), 2, 1.1)):
            v = rng.normal(size=shape)
            w = rng.normal(size=shape)
            lhs = float(np.sum(axis_difference(v, ax, h) * w))
            rhs = float(np.sum(v * axis_difference_adjoint(w, ax, h)))
            assert lhs == pytest.approx(rhs, rel=1e-12)


class TestNodalField:
    def test_gradient_affine_exact(self, grid_fine):
        f = nodal_from_fn(grid_fine, lambda p: 3.0 * p[:, 0] + 2.0 * p[:, 1] - 1.0)
        g = gradient(f)
        assert np.allclose(g.vectors, [3.0, 2.0])

    def test_constant_gradient_zero(self, grid3):
        f = NodalField(grid3, np.full(9, 4.2))
        assert np.allclose(gradient(f).vectors, 0.0)

    def test_value_length_checked(self, grid3):
        with pytest.raises(ShapeError):
            NodalField(grid3, np.zeros(8))

    def test_nonfinite_rejected(self, grid3):
        vals = np.zeros(9)
        vals[3] = np.nan
        with pytest.raises(ShapeError):
            NodalField(grid3, vals)

    def test_interpolate_at_nodes_exact(self, grid3):
        rng = np.random.default_rng(3)
        f = NodalField(grid3, rng.normal(size=9))
        for i, p in enumerate(grid3.nodes()):
            assert interpolate(f, p) == pytest.approx(f.values.reshape(-1)[i])

    def test_interpolate_midpoint_of_linear(self, grid3):
        f = nodal_from_fn(grid3, lambda p: p[:, 0])
        assert interpolate(f, [0.5, 0.5]) == pytest.approx(0.5)

    def test_interpolate_outside_box(self, grid3):
        f = NodalField(grid3, np.zeros(9))
        with pytest.raises(DomainError):
            interpolate(f, [5.0, 0.0])

    def test_csv_round_trip_bitwise(self, grid3, tmp_path):
        rng = np.random.default_rng(11)
        f = NodalField(grid3, rng.normal(size=9))
        p = tmp_path / "f.csv"
        nodal_to_csv(f, p)
        again = nodal_from_csv(p)
        assert again.grid == grid3
        assert np.array_equal(again.values, f.values)


class TestIntegrate:
    def test_constant_on_3x3(self, grid3):
        assert integrate(np.full(9, 0.5), grid3) == pytest.approx(4.5)

    def test_zeros(self, grid3):
        assert integrate(np.zeros(9), grid3) == 0.0

    def test_1d_ramp(self):
        g = GridSpec(mins=(0.0,), spacing=(1.0,), counts=(3,))
        assert integrate(np.array([0.0, 1.0, 2.0]), g) == pytest.approx(3.0)

    def test_linearity(self, grid3):
        rng = np.random.default_rng(5)
        u, v = rng.normal(size=9), rng.normal(size=9)
        lhs = integrate(2.0 * u - 3.0 * v, grid3)
        rhs = 2.0 * integrate(u, grid3) - 3.0 * integrate(v, grid3)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_length_mismatch(self, grid3):
        with pytest.raises(ShapeError):
            integrate(np.zeros(5), grid3)


class TestTensorPolynomialBasis:
    def test_size(self):
        b = TensorPolynomialBasis([0.0, 0.0], [1.0, 1.0], 3)
        assert b.size == 16
        b3 = TensorPolynomialBasis([0.0] * 3, [1.0] * 3, 2)
        assert b3.size == 27

    def test_fit_reproduces_polynomial(self):
        b = TensorPolynomialBasis([0.0, 0.0], [2.0, 3.0], 2)
        rng = np.random.default_rng(2)
        pts = rng.uniform([0, 0], [2, 3], size=(40, 2))
        target = 1.0 + pts[:, 0] * pts[:, 1] - 0.5 * pts[:, 1] ** 2
        f = SmoothBasisField(b, b.fit(pts, target))
        probe = rng.uniform([0, 0], [2, 3], size=(25, 2))
        want = 1.0 + probe[:, 0] * probe[:, 1] - 0.5 * probe[:, 1] ** 2
        assert np.allclose(f.values_at(probe), want, atol=1e-9)

    def test_interpolate_direct_evaluation(self):
        # polynomial 1 + x1*x2 evaluated at (2,3) -> 7
        b = TensorPolynomialBasis([0.0, 0.0], [4.0, 4.0], 2)
        pts = b.reference_points()
        f = SmoothBasisField(b, b.fit(pts, 1.0 + pts[:, 0] * pts[:, 1]))
        assert interpolate(f, [2.0, 3.0]) == pytest.approx(7.0, abs=1e-9)

    def test_analytic_gradient_matches_fd(self):
        b = TensorPolynomialBasis([0.0, 0.0], [1.0, 1.0], 3)
        rng = np.random.default_rng(4)
        f = SmoothBasisField(b, rng.normal(size=b.size))
        pts = rng.uniform(0.1, 0.9, size=(20, 2))
        g = f.gradient_at(pts)
        h = 1e-6
        for ax in range(2):
            e = np.zeros(2)
            e[ax] = h
            fd = (f.values_at(pts + e) - f.values_at(pts - e)) / (2 * h)
            assert np.allclose(g[:, ax], fd, atol=1e-6)

    def test_gradient_outside_domain_rejected(self):
        b = TensorPolynomialBasis([0.0, 0.0], [1.0, 1.0], 2)
        f = SmoothBasisField(b, np.ones(b.size))
        with pytest.raises(DomainError):
            gradient(f, np.array([[3.0, 0.5]]))
        with pytest.raises(DomainError):
            interpolate(f, [3.0, 0.5])

    def test_coefficient_count_checked(self):
        b = TensorPolynomialBasis([0.0, 0.0], [1.0, 1.0], 2)
        with pytest.raises(ShapeError):
            SmoothBasisField(b, np.ones(b.size + 1))


class TestGaussianRBFBasis:
    def test_fit_and_gradient(self):
        rng = np.random.default_rng(9)
        centers = rng.uniform(0, 1, size=(12, 2))
        b = GaussianRBFBasis(centers, 0.6)
        f = SmoothBasisField(b, rng.normal(size=b.size))
        pts = rng.uniform(0.2, 0.8, size=(15, 2))
        g = f.gradient_at(pts)
        h = 1e-6
        for ax in range(2):
            e = np.zeros(2)
            e[ax] = h
            fd = (f.values_at(pts + e) - f.values_at(pts - e)) / (2 * h)
            assert np.allclose(g[:, ax], fd, atol=1e-5)


class TestFieldJson:
    def test_nodal_round_trip(self, grid3):
        rng = np.random.default_rng(13)
        f = NodalField(grid3, rng.normal(size=9))
        again = field_from_json(field_to_json(f))
        assert isinstance(again, NodalField)
        assert again.grid == grid3
        assert np.array_equal(again.values, f.values)

    def test_smooth_round_trip(self):
        b = TensorPolynomialBasis([0.0, -1.0], [2.0, 1.0], 3)
        rng = np.random.default_rng(17)
        f = SmoothBasisField(b, rng.normal(size=b.size))
        again = field_from_json(field_to_json(f))
        assert isinstance(again, SmoothBasisField)
        pts = rng.uniform([0, -1], [2, 1], size=(10, 2))
        assert np.array_equal(again.values_at(pts), f.values_at(pts))

    def test_rbf_round_trip(self):
        rng = np.random.default_rng(19)
        b = GaussianRBFBasis(rng.uniform(0, 1, size=(8, 3)), 0.5)
        f = SmoothBasisField(b, rng.normal(size=8))
        again = field_from_json(field_to_json(f))
        pts = rng.uniform(0.1, 0.9, size=(6, 3))
        assert np.allclose(again.values_at(pts), f.values_at(pts), rtol=0, atol=0)

    def test_payload_is_json(self, grid3):
        f = NodalField(grid3, np.zeros(9))
        json.loads(field_to_json(f))
