"""Grid, field, and finite-difference operator tests."""
import numpy as np
import pytest

from semipot import Grid, PhysicalConstants, ScalarField, divergence, gradient, laplacian
from semipot.fields import NODE_CAP_ENV, laplacian_values

from conftest import grid_1d, grid_nd


class TestGrid:
    def test_rejects_small_extents(self):
        with pytest.raises(ValueError, match="grid too small"):
            Grid((3,), (0.0,), (0.1,))

    def test_rejects_bad_spacing(self):
        with pytest.raises(ValueError, match="spacing"):
            Grid((8,), (0.0,), (-0.1,))
        with pytest.raises(ValueError, match="spacing"):
            Grid((8,), (0.0,), (0.0,))

    def test_rejects_dim_over_three(self):
        with pytest.raises(ValueError, match="dimension"):
            Grid((8, 8, 8, 8), (0.0,) * 4, (0.1,) * 4)

    def test_rejects_unknown_boundary(self):
        with pytest.raises(ValueError, match="boundary"):
            Grid((8,), (0.0,), (0.1,), "reflecting")

    def test_node_cap_env(self, monkeypatch):
        monkeypatch.setenv(NODE_CAP_ENV, "100")
        with pytest.raises(ValueError, match="desk-scale cap"):
            Grid((101,), (0.0,), (0.1,))
        Grid((100,), (0.0,), (0.1,))

    def test_interior_mask_depth(self):
        g = grid_nd(8, 0.0, 1.0, 2)
        m1 = g.interior_mask()
        assert not m1[0, 3] and not m1[3, -1] and m1[3, 3]
        m2 = g.interior_mask(depth=2)
        assert not m2[1, 3] and m2[2, 3]
        gp = grid_nd(8, 0.0, 1.0, 2, boundary="periodic")
        assert gp.interior_mask().all()

    def test_refined_keeps_box(self):
        g = grid_1d(65, -1.0, 1.0)
        r = g.refined()
        assert r.extents == (129,)
        assert r.box == g.box
        gp = grid_1d(64, -1.0, 1.0, boundary="periodic")
        rp = gp.refined()
        assert rp.extents == (128,)
        assert rp.spacing[0] * rp.extents[0] == pytest.approx(2.0)


class TestFieldTypes:
    def test_values_are_frozen_snapshots(self):
        g = grid_1d(8, 0.0, 1.0)
        src = np.zeros(8)
        f = ScalarField(g, src)
        src[0] = 42.0
        assert f.values[0] == 0.0
        with pytest.raises(ValueError):
            f.values[0] = 1.0

    def test_rejects_nonfinite(self):
        g = grid_1d(8, 0.0, 1.0)
        bad = np.zeros(8)
        bad[3] = np.inf
        with pytest.raises(ValueError, match="finite"):
            ScalarField(g, bad)

    def test_rejects_shape_mismatch(self):
        g = grid_1d(8, 0.0, 1.0)
        with pytest.raises(ValueError, match="shape"):
            ScalarField(g, np.zeros(9))

    def test_constants_positive(self):
        with pytest.raises(ValueError):
            PhysicalConstants(hbar=0.0)
        with pytest.raises(ValueError):
            PhysicalConstants(mass=-1.0)


class TestGradient:
    def test_constant_field_gives_zero(self):
        g = grid_nd(16, -1.0, 1.0, 2)
        (gx, gy) = gradient(ScalarField.full(g, 3.7))
        # one-sided boundary rows cancel only to rounding
        np.testing.assert_allclose(gx.values, 0.0, atol=1e-12)
        np.testing.assert_allclose(gy.values, 0.0, atol=1e-12)
        np.testing.assert_array_equal(gx.values[1:-1, :], 0.0)

    def test_linear_field_periodic_interior(self):
        g = grid_1d(64, 0.0, 1.0, boundary="periodic")
        f = ScalarField(g, g.axes()[0])
        (gx,) = gradient(f)
        # wrap nodes see the sawtooth jump; the interior is exactly 1
        np.testing.assert_allclose(gx.values[1:-1], 1.0, atol=1e-12)

    def test_sin_against_closed_form(self):
        g = grid_1d(401, -2.0, 2.0)
        x = g.axes()[0]
        assert g.spacing[0] == pytest.approx(0.01)
        (gx,) = gradient(ScalarField(g, np.sin(2.0 * x)))
        err = np.max(np.abs(gx.values - 2.0 * np.cos(2.0 * x)))
        assert err <= 1e-3

    def test_halving_h_is_second_order(self):
        errors = []
        for n in (201, 401):
            g = grid_1d(n, -2.0, 2.0)
            x = g.axes()[0]
            (gx,) = gradient(ScalarField(g, np.sin(3.0 * x)))
            errors.append(np.max(np.abs(gx.values - 3.0 * np.cos(3.0 * x))))
        ratio = errors[0] / errors[1]
        assert 3.4 <= ratio <= 4.6


class TestLaplacian:
    def test_constant_field_gives_zero_interior(self):
        g = grid_1d(16, 0.0, 1.0)
        lap = laplacian(ScalarField.full(g, 2.0))
        np.testing.assert_array_equal(lap.values[1:-1], 0.0)

    def test_exact_on_quadratic(self):
        g = grid_1d(101, -1.0, 1.0)
        x = g.axes()[0]
        lap = laplacian(ScalarField(g, x**2))
        np.testing.assert_allclose(lap.values[1:-1], 2.0, atol=1e-10)

    def test_2d_product_of_sines(self):
        n = int(round(2.0 / 0.02)) + 1
        g = grid_nd(n, -1.0, 1.0, 2)
        x, y = g.coords()
        f = np.sin(x) * np.sin(y)
        lap = laplacian(ScalarField(g, f))
        interior = g.interior_mask()
        rel = np.max(np.abs((lap.values + 2.0 * f)[interior])) / (2.0 * np.max(np.abs(f)))
        assert rel <= 1e-3

    def test_halving_h_is_second_order(self):
        errors = []
        for n in (201, 401):
            g = grid_1d(n, -2.0, 2.0)
            x = g.axes()[0]
            f = np.sin(3.0 * x)
            lap = laplacian(ScalarField(g, f))
            errors.append(np.max(np.abs((lap.values + 9.0 * f)[1:-1])))
        ratio = errors[0] / errors[1]
        assert 3.4 <= ratio <= 4.6

    def test_linearity_to_machine_precision(self):
        rng = np.random.default_rng(7)
        g = grid_nd(12, 0.0, 1.0, 2)
        f = ScalarField(g, rng.normal(size=g.extents))
        h = ScalarField(g, rng.normal(size=g.extents))
        a, b = 2.5, -1.25
        combo = laplacian(ScalarField(g, a * f.values + b * h.values))
        expected = a * laplacian(f).values + b * laplacian(h).values
        np.testing.assert_allclose(combo.values, expected, rtol=0, atol=1e-11)

    def test_periodic_wraps(self):
        g = grid_1d(128, 0.0, 2.0 * np.pi, boundary="periodic")
        x = g.axes()[0]
        f = np.cos(x)
        lap = laplacian(ScalarField(g, f))
        # commensurate mode: residual is the symbol defect, uniform everywhere
        np.testing.assert_allclose(lap.values, -f * (2 - 2 * np.cos(g.spacing[0])) / g.spacing[0] ** 2, atol=1e-12)


class TestDivergence:
    def test_zero_field(self):
        g = grid_nd(8, 0.0, 1.0, 2)
        z = ScalarField.full(g, 0.0)
        np.testing.assert_array_equal(divergence((z, z)).values, 0.0)

    def test_linear_component(self):
        g = grid_1d(32, -1.0, 1.0)
        f = ScalarField(g, g.axes()[0])
        np.testing.assert_allclose(divergence((f,)).values[1:-1], 1.0, atol=1e-12)

    def test_divergence_of_gradient_matches_laplacian(self):
        g = grid_1d(201, -2.0, 2.0)
        x = g.axes()[0]
        f = ScalarField(g, np.sin(x))
        composed = divergence(gradient(f))
        lap = laplacian_values(f.values, g)
        deep = g.interior_mask(depth=2)
        err = np.max(np.abs((composed.values - lap)[deep]))
        # composition error is O(h^2); constant measured by refinement below
        g2 = g.refined()
        x2 = g2.axes()[0]
        f2 = ScalarField(g2, np.sin(x2))
        err2 = np.max(
            np.abs((divergence(gradient(f2)).values - laplacian_values(f2.values, g2))[
                g2.interior_mask(depth=2)
            ])
        )
        c_est = err2 / g2.spacing[0] ** 2
        assert err <= 5.0 * c_est * g.spacing[0] ** 2

    def test_component_count_checked(self):
        g = grid_nd(8, 0.0, 1.0, 2)
        f = ScalarField.full(g, 1.0)
        with pytest.raises(ValueError, match="components"):
            divergence((f,))
