"""Stock systems, sampling, noise, orbits, and the planar window."""

import numpy as np
import pytest

from koopreg import (
    GridSpec,
    LimitCycle2D,
    LinearSystem,
    LorenzSystem,
    NoiseSpec,
    ShapeError,
    VectorFieldSamples,
    add_noise,
    extract_segment,
    integrate_orbit,
    planar_window,
    sample_grid,
    sample_points,
    system_by_name,
)


class TestStockSystems:
    def test_real_eigenvalue_matrix(self):
        sys2 = system_by_name("lin-real")
        # (1/200) [[11,-5],[-5,11]] at (6,0) -> (66/200, -30/200)
        assert np.allclose(sys2.eval([6.0, 0.0]), [0.33, -0.15])

    def test_complex_eigenvalue_matrix(self):
        sys2 = system_by_name("lin-complex")
        # (1/10) [[-0.4,0.1],[-0.4,-0.5]] at (1,1) -> (-0.03, -0.09)
        assert np.allclose(sys2.eval([1.0, 1.0]), [-0.03, -0.09])

    def test_imaginary_eigenvalue_matrix(self):
        sys2 = system_by_name("lin-imaginary")
        # (1/10) [[0,1],[-1,0]] at (6,0) -> (0, -0.6)
        assert np.allclose(sys2.eval([6.0, 0.0]), [0.0, -0.6])

    def test_limit_cycle_on_unit_circle(self):
        sys2 = system_by_name("nonlinear")
        # cubic factor vanishes on the unit circle, rotation survives
        assert np.allclose(sys2.eval([1.0, 0.0]), [0.0, 0.001])

    def test_limit_cycle_scale(self):
        sys2 = LimitCycle2D(scale=1.0)
        assert np.allclose(sys2.eval([1.0, 0.0]), [0.0, 1.0])

    def test_lorenz_classic_point(self):
        sys3 = system_by_name("lorenz")
        assert np.allclose(sys3.eval([1.0, 1.0, 1.0]), [0.0, 26.0, -8.0 / 3.0 + 1.0])

    def test_linear_rejects_nonsquare(self):
        with pytest.raises(ShapeError):
            LinearSystem(np.ones((2, 3)))

    def test_unknown_name(self):
        with pytest.raises(ShapeError):
            system_by_name("does-not-exist")

    def test_dim_mismatch(self):
        sys2 = system_by_name("lin-real")
        with pytest.raises(ShapeError):
            sys2.eval([1.0, 2.0, 3.0])


class TestSampling:
    def test_grid_layout_and_count(self):
        g = GridSpec.from_box([6.0, -3.0], [12.0, 3.0], 0.1)
        s = sample_grid(system_by_name("lin-imaginary"), g)
        assert s.count == 3721
        assert s.layout == g
        # P = (x2/10, -x1/10) at each node
        assert np.allclose(s.vectors[:, 0], s.points[:, 1] / 10.0)
        assert np.allclose(s.vectors[:, 1], -s.points[:, 0] / 10.0)

    def test_scattered_no_layout(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform([6, -3], [12, 3], size=(30, 2))
        s = sample_points(system_by_name("lin-real"), pts)
        assert s.layout is None
        assert s.count == 30

    def test_quadrature_weight_lattice(self):
        g = GridSpec.from_box([0.0, 0.0], [1.0, 2.0], 0.5)
        s = sample_grid(system_by_name("lin-real"), g)
        assert s.quadrature_weight == pytest.approx(g.cell_volume)

    def test_quadrature_weight_scattered(self):
        pts = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 3.0], [0.0, 3.0]])
        s = VectorFieldSamples(pts, np.ones((4, 2)))
        assert s.quadrature_weight == pytest.approx(6.0 / 4.0)

    def test_nonfinite_rejected(self):
        pts = np.zeros((2, 2))
        vecs = np.array([[1.0, np.inf], [0.0, 0.0]])
        with pytest.raises(ShapeError):
            VectorFieldSamples(pts, vecs)


class TestNoise:
    def test_seeded_determinism(self):
        g = GridSpec.from_box([6.0, -3.0], [12.0, 3.0], 0.5)
        clean = sample_grid(system_by_name("lin-real"), g)
        a = add_noise(clean, NoiseSpec(std=0.1, seed=42))
        b = add_noise(clean, NoiseSpec(std=0.1, seed=42))
        assert np.array_equal(a.vectors, b.vectors)
        c = add_noise(clean, NoiseSpec(std=0.1, seed=43))
        assert not np.array_equal(a.vectors, c.vectors)

    def test_moments_on_dense_grid(self):
        g = GridSpec.from_box([6.0, -3.0], [12.0, 3.0], 0.1)
        clean = sample_grid(system_by_name("lin-imaginary"), g)
        noisy = add_noise(clean, NoiseSpec(std=0.1, seed=0))
        delta = noisy.vectors - clean.vectors
        assert 0.095 < delta.std() < 0.105
        assert abs(delta.mean()) < 0.005

    def test_mean_shift(self):
        g = GridSpec.from_box([0.0, 0.0], [1.0, 1.0], 0.1)
        clean = sample_grid(system_by_name("lin-real"), g)
        noisy = add_noise(clean, NoiseSpec(std=0.0, mean=2.0, seed=0))
        assert np.allclose(noisy.vectors - clean.vectors, 2.0)

    def test_zero_std_identity(self):
        g = GridSpec.from_box([0.0, 0.0], [1.0, 1.0], 0.5)
        clean = sample_grid(system_by_name("lin-real"), g)
        noisy = add_noise(clean, NoiseSpec(std=0.0, seed=9))
        assert np.array_equal(noisy.vectors, clean.vectors)

    def test_negative_std_rejected(self):
        with pytest.raises(ShapeError):
            NoiseSpec(std=-0.1)


class TestOrbit:
    def test_rk4_exponential_one_step(self):
        # xdot = x from 1.0, one 0.1 step: classic fourth-order value
        sys1 = LinearSystem(np.array([[1.0]]))
        orbit = integrate_orbit(sys1, [1.0], 0.1, 1)
        assert orbit.shape == (2, 1)
        assert orbit[1, 0] == pytest.approx(1.1051708333333334, rel=1e-12)

    def test_rk4_rotation_preserves_radius(self):
        sys2 = system_by_name("lin-imaginary")
        orbit = integrate_orbit(sys2, [9.0, 0.0], 0.01, 2000)
        r = np.linalg.norm(orbit, axis=1)
        assert np.allclose(r, 9.0, rtol=1e-6)

    def test_lorenz_orbit_bounded(self):
        sys3 = system_by_name("lorenz")
        orbit = integrate_orbit(sys3, [1.0, 1.0, 1.0], 0.01, 5000)
        assert orbit.shape == (5001, 3)
        assert np.max(np.linalg.norm(orbit, axis=1)) < 100.0

    def test_extract_segment_matches_field(self):
        sys3 = system_by_name("lorenz")
        orbit = integrate_orbit(sys3, [1.0, 1.0, 1.0], 0.01, 100)
        seg = extract_segment(sys3, orbit, 10, 20)
        assert seg.count == 10
        assert np.array_equal(seg.points, orbit[10:20])
        assert np.allclose(seg.vectors[0], sys3.eval(orbit[10]))

    def test_planar_window_is_planar(self):
        sys3 = system_by_name("lorenz")
        orbit = integrate_orbit(sys3, [1.0, 1.0, 1.0], 0.01, 5000)
        start, end, ratio = planar_window(orbit, 300)
        assert end - start == 300
        assert ratio < 0.05
        window = orbit[start:end]
        c = window - window.mean(axis=0)
        s = np.linalg.svd(c, compute_uv=False)
        assert s[2] / s[0] == pytest.approx(ratio)


class TestSamplesCsv:
    def test_round_trip_bitwise_lattice(self, tmp_path):
        g = GridSpec.from_box([6.0, -3.0], [12.0, 3.0], 1.0)
        s = add_noise(sample_grid(system_by_name("lin-real"), g), NoiseSpec(0.1, seed=1))
        p = tmp_path / "s.csv"
        s.to_csv(p)
        again = VectorFieldSamples.from_csv(p)
        assert np.array_equal(again.points, s.points)
        assert np.array_equal(again.vectors, s.vectors)
        assert again.layout == g

    def test_round_trip_scattered(self, tmp_path):
        rng = np.random.default_rng(8)
        pts = rng.uniform(-1, 1, size=(17, 3))
        s = VectorFieldSamples(pts, rng.normal(size=(17, 3)))
        p = tmp_path / "s.csv"
        s.to_csv(p)
        again = VectorFieldSamples.from_csv(p)
        assert np.array_equal(again.points, s.points)
        assert np.array_equal(again.vectors, s.vectors)
        assert again.layout is None

    def test_header_names(self, tmp_path):
        g = GridSpec.from_box([0.0, 0.0], [1.0, 1.0], 1.0)
        s = sample_grid(system_by_name("lin-real"), g)
        p = tmp_path / "s.csv"
        s.to_csv(p)
        header = p.read_text().splitlines()[0]
        assert header == "x1,x2,p1,p2"
