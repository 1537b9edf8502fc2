"""Helmholtz mode catalog, residual verification, and the driven solve."""
import numpy as np
import pytest

from semipot import (
    Grid,
    HelmholtzMode,
    LambdaSchedule,
    PhysicalConstants,
    ResonanceError,
    ScalarField,
    evaluate_mode,
    quantum_level,
    solve_inhomogeneous,
    time_derivative,
    verify_helmholtz,
    wavenumber_from_level,
)
from semipot.helmholtz import _sinc_profile

from conftest import cos_mode, grid_1d, grid_nd, sin_mode


class TestModeInvariants:
    def test_wavevector_norm_must_match_lambda(self):
        with pytest.raises(ValueError, match=r"\|k\|"):
            HelmholtzMode.plane_waves(2.0, [[1.0]], [1.0])

    def test_needs_nonzero_amplitude(self):
        with pytest.raises(ValueError, match="amplitude"):
            HelmholtzMode.plane_waves(1.0, [[1.0]], [0.0])

    def test_harmonic_requires_lambda_zero(self):
        with pytest.raises(ValueError, match="lambda = 0"):
            HelmholtzMode("harmonic", 1.0, (), (1.0,), ())

    def test_radial_sinc_is_3d_only(self):
        mode = HelmholtzMode.radial_sinc(1.0)
        with pytest.raises(ValueError, match="dimension"):
            evaluate_mode(mode, grid_1d(16, -1.0, 1.0))

    def test_rescaled_keeps_directions(self):
        mode = HelmholtzMode.plane_waves(1.0, [[0.6, 0.8]], [1.0])
        scaled = mode.rescaled(2.0)
        assert scaled.wavevectors[0] == pytest.approx((1.2, 1.6))
        assert scaled.lam == 2.0


class TestEvaluateMode:
    def test_harmonic_constant(self):
        g = grid_1d(16, -1.0, 1.0)
        f = evaluate_mode(HelmholtzMode.harmonic(1.0), g)
        np.testing.assert_array_equal(f.values, 1.0)

    def test_harmonic_affine(self):
        g = grid_1d(16, -1.0, 1.0)
        f = evaluate_mode(HelmholtzMode.harmonic(1.0, (0.5,)), g)
        np.testing.assert_allclose(f.values, 1.0 + 0.5 * g.axes()[0])

    def test_separable_2d_product(self):
        g = grid_nd(21, -1.0, 1.0, 2)
        mode = HelmholtzMode.separable(np.sqrt(2.0), [[1.0, 1.0]], [1.0])
        f = evaluate_mode(mode, g)
        x, y = g.coords()
        np.testing.assert_allclose(f.values, np.cos(x) * np.cos(y), atol=1e-14)

    def test_radial_sinc_center_and_zero(self):
        # grid includes the origin and the radius-pi sphere along an axis
        g = Grid((33, 9, 9), (-np.pi, -0.5, -0.5), (2 * np.pi / 32, 0.125, 0.125))
        f = evaluate_mode(HelmholtzMode.radial_sinc(1.0), g)
        center = (16, 4, 4)
        assert abs(f.values[center] - 1.0) <= 1e-12
        assert abs(f.values[0, 4, 4]) <= 1e-12  # r = pi along x

    def test_sinc_series_matches_direct_formula(self):
        # series branch vs sin(r)/r across the switchover
        r = np.array([1e-6, 5e-5, 9.9e-5, 1.1e-4, 1e-3, 0.1])
        direct = np.sin(r) / r
        np.testing.assert_allclose(_sinc_profile(r), direct, rtol=0, atol=1e-15)


class TestVerifyHelmholtz:
    def test_cos_mode_residual_is_second_order(self):
        g = grid_1d(401, -2.0, 2.0)
        f = evaluate_mode(cos_mode(2.0), g)
        entry = verify_helmholtz(f, 2.0, tol=1e-2)
        assert entry.passed
        # the measured constant predicts the refined residual
        c_est = entry.measured / g.spacing[0] ** 2
        g2 = g.refined()
        f2 = evaluate_mode(cos_mode(2.0), g2)
        entry2 = verify_helmholtz(f2, 2.0, tol=5 * c_est * g2.spacing[0] ** 2)
        assert entry2.passed

    def test_non_solution_fails_tight_tolerance(self):
        g = grid_1d(64, -1.0, 1.0)
        x = g.axes()[0]
        entry = verify_helmholtz(ScalarField(g, x**2), 1.0, tol=1e-6)
        assert not entry.passed
        assert entry.measured >= 1.0  # |2 + x^2| in the interior

    def test_zero_field_passes_any_tolerance(self):
        g = grid_1d(16, -1.0, 1.0)
        entry = verify_helmholtz(ScalarField.full(g, 0.0), 3.0, tol=0.0)
        assert entry.passed
        assert entry.measured == 0.0

    @pytest.mark.parametrize(
        "mode,dim,box",
        [
            (cos_mode(2.0), 1, (-2.0, 2.0)),
            (HelmholtzMode.plane_waves(2.0, [[2.0]], [0.7], [0.3]), 1, (-2.0, 2.0)),
            (HelmholtzMode.separable(np.sqrt(2.0), [[1.0, 1.0]], [1.0]), 2, (-1.5, 1.5)),
            (HelmholtzMode.radial_sinc(1.0), 3, (-0.9, 0.9)),
            (HelmholtzMode.harmonic(1.0, (0.5,)), 1, (-1.0, 1.0)),
        ],
    )
    def test_catalog_modes_pass_across_refinement(self, mode, dim, box):
        n = 33 if dim == 3 else 65
        g = grid_nd(n, box[0], box[1], dim)
        f = evaluate_mode(mode, g)
        measured = verify_helmholtz(f, mode.lam, tol=np.inf).measured
        c_est = measured / max(g.spacing) ** 2
        g2 = g.refined()
        f2 = evaluate_mode(mode, g2)
        tol = max(5 * c_est * max(g2.spacing) ** 2, 1e-12)
        assert verify_helmholtz(f2, mode.lam, tol=tol).passed

    def test_superposition_closure(self):
        g = grid_1d(257, -2.0, 2.0)
        lam = 2.0
        combo = HelmholtzMode.plane_waves(
            lam, [[lam], [-lam]], [0.8, -0.5], [0.0, 1.1]
        )
        f = evaluate_mode(combo, g)
        single = evaluate_mode(cos_mode(lam), g)
        tol = 5 * verify_helmholtz(single, lam, np.inf).measured
        assert verify_helmholtz(f, lam, tol=tol).passed

    def test_oscillation_witness_negative_minimum(self):
        # every lambda > 0 family dips negative on a box of side >= 2*pi/lambda
        cases = [
            (cos_mode(2.0), 1, np.pi),
            (HelmholtzMode.separable(np.sqrt(2.0), [[1.0, 1.0]], [1.0]), 2, 2 * np.pi / np.sqrt(2.0)),
            (HelmholtzMode.radial_sinc(1.0), 3, 2 * np.pi),
        ]
        for mode, dim, side in cases:
            g = grid_nd(25 if dim == 3 else 101, -side / 2, side / 2, dim)
            f = evaluate_mode(mode, g)
            assert f.values.min() < 0.0


class TestSolveInhomogeneous:
    def test_zero_rhs_gives_zero_solution(self):
        g = grid_1d(65, 0.0, 1.0)
        sol = solve_inhomogeneous(g, 1.0, ScalarField.full(g, 0.0))
        np.testing.assert_array_equal(sol.values, 0.0)

    def test_manufactured_solution_1d(self):
        g = grid_1d(129, 0.0, 2.0)
        x = g.axes()[0]
        target = (x - 0.0) * (2.0 - x) * np.sin(x)
        lam = 1.0
        from semipot.helmholtz import helmholtz_residual_values

        rhs = helmholtz_residual_values(ScalarField(g, target), lam)
        sol = solve_inhomogeneous(g, lam, ScalarField(g, rhs))
        assert np.max(np.abs(sol.values - target)) <= 1e-8

    def test_manufactured_solution_2d(self):
        g = grid_nd(49, 0.0, 1.5, 2)
        x, y = g.coords()
        target = x * (1.5 - x) * y * (1.5 - y) * np.sin(x + y)
        lam = 1.0
        from semipot.helmholtz import helmholtz_residual_values

        rhs = helmholtz_residual_values(ScalarField(g, target), lam)
        sol = solve_inhomogeneous(g, lam, ScalarField(g, rhs))
        assert np.max(np.abs(sol.values - target)) <= 1e-8

    def test_resonant_lambda_raises(self):
        g = grid_1d(65, 0.0, 1.0)
        h = g.spacing[0]
        # lowest discrete eigenvalue of the interior second-difference matrix
        lam = (2.0 / h) * np.sin(np.pi / (2 * 64))
        with pytest.raises(ResonanceError, match="resonant"):
            rhs = ScalarField(g, np.sin(np.pi * g.axes()[0]))
            solve_inhomogeneous(g, lam, rhs)

    def test_linearity_in_rhs(self):
        g = grid_1d(65, 0.0, 1.0)
        x = g.axes()[0]
        r1 = ScalarField(g, np.sin(3 * x) * x * (1 - x))
        r2 = ScalarField(g, np.cos(2 * x) * x * (1 - x))
        a, b = 1.7, -0.4
        combo = ScalarField(g, a * r1.values + b * r2.values)
        s_combo = solve_inhomogeneous(g, 1.0, combo)
        expected = (
            a * solve_inhomogeneous(g, 1.0, r1).values
            + b * solve_inhomogeneous(g, 1.0, r2).values
        )
        np.testing.assert_allclose(s_combo.values, expected, rtol=0, atol=1e-10)

    def test_periodic_grid_rejected(self):
        g = grid_1d(64, 0.0, 1.0, boundary="periodic")
        with pytest.raises(ValueError, match="dirichlet"):
            solve_inhomogeneous(g, 1.0, ScalarField.full(g, 0.0))


class TestTimeDerivative:
    def test_constant_sequence(self):
        g = grid_1d(16, 0.0, 1.0)
        seq = [ScalarField.full(g, 2.0)] * 5
        for d in time_derivative(seq, 0.1):
            np.testing.assert_allclose(d.values, 0.0, atol=1e-12)

    def test_exact_on_linear_time_dependence(self):
        g = grid_1d(32, 0.0, 1.0)
        f = np.sin(g.axes()[0])
        dt = 0.01
        seq = [ScalarField(g, (1.0 + k * dt) * f) for k in range(5)]
        for d in time_derivative(seq, dt):
            np.testing.assert_allclose(d.values, f, atol=1e-10)

    def test_cosine_second_order(self):
        g = grid_1d(16, 0.0, 1.0)
        f = np.sin(g.axes()[0])
        errors = []
        for dt in (0.02, 0.01):
            ts = dt * np.arange(9)
            seq = [ScalarField(g, np.cos(t) * f) for t in ts]
            ds = time_derivative(seq, dt)
            errors.append(
                max(
                    np.max(np.abs(d.values + np.sin(t) * f))
                    for d, t in zip(ds, ts)
                )
            )
        assert errors[1] <= errors[0] / 3.0  # O(dt^2)

    def test_needs_three_samples(self):
        g = grid_1d(16, 0.0, 1.0)
        with pytest.raises(ValueError, match="3 time samples"):
            time_derivative([ScalarField.full(g, 1.0)] * 2, 0.1)


class TestLambdaSchedule:
    def test_interpolation_is_piecewise_linear(self):
        s = LambdaSchedule(np.array([0.0, 1.0, 2.0]), np.array([1.0, 3.0, 3.0]))
        assert s.value_at(0.5) == pytest.approx(2.0)
        assert s.value_at(1.5) == pytest.approx(3.0)

    def test_rejects_negative_lambda(self):
        with pytest.raises(ValueError, match=">= 0"):
            LambdaSchedule(np.array([0.0, 1.0]), np.array([1.0, -0.5]))

    def test_rejects_nonuniform_times(self):
        with pytest.raises(ValueError, match="uniform"):
            LambdaSchedule(np.array([0.0, 1.0, 3.0]), np.array([1.0, 1.0, 1.0]))

    def test_level_roundtrip(self, unit_constants):
        lam = 1.7
        level = quantum_level(lam, unit_constants)
        assert wavenumber_from_level(level, unit_constants) == pytest.approx(lam)

    def test_negative_level_rejected(self, unit_constants):
        with pytest.raises(ValueError, match="imaginary"):
            wavenumber_from_level(-0.1, unit_constants)

    def test_from_levels(self, unit_constants):
        times = np.linspace(0.0, 1.0, 5)
        levels = np.full(5, 2.0)
        s = LambdaSchedule.from_levels(times, levels, unit_constants)
        np.testing.assert_allclose(s.values, 2.0)
        assert s.level_at(0.3, unit_constants) == pytest.approx(2.0)
