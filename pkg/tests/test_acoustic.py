import numpy as np
import pytest

from hsprobe import acoustic as ac
from hsprobe import oracle
from hsprobe.errors import ConfigurationError, ConvergenceError, PreconditionError, SingularityError
from hsprobe.geometry import ShapeSpec
from hsprobe.grid import GridSpec, ScalarGridField
from hsprobe.quadrature import ball_constraint, integrate_region


class TestKernels:
    @pytest.mark.parametrize("k, r, expected", [
        (1.0, 1.0, 0.04299589137143181 + 0.06696213335029096j),
        (2.0, 0.5, 0.08599178274286362 + 0.1339242667005819j),
    ])
    def test_phi_values(self, k, r, expected):
        assert ac.phi(k, np.zeros(3), np.array([0.0, r, 0.0])) == pytest.approx(expected, rel=1e-9)

    def test_phi_leading_singularity(self):
        r = 1e-7
        assert ac.phi(1.0, np.zeros(3), np.array([r, 0, 0])) * 4 * np.pi * r == pytest.approx(1.0, abs=1e-6)

    def test_coincident(self):
        with pytest.raises(SingularityError):
            ac.phi(1.0, np.ones(3), np.ones(3))
        with pytest.raises(SingularityError):
            ac.grad_phi(1.0, np.ones(3), np.ones(3))

    def test_grad_static_limit(self):
        x, y = np.array([0.3, -0.2, 0.5]), np.zeros(3)
        r = np.linalg.norm(x)
        np.testing.assert_allclose(ac.grad_phi(1e-9, x, y), -x / (4 * np.pi * r**3), rtol=1e-8)

    def test_grad_parallel(self, rng):
        for _ in range(20):
            x, y = rng.normal(size=3), rng.normal(size=3)
            g = ac.grad_phi(1.3, x, y)
            assert np.linalg.norm(np.cross(g.real, x - y)) <= 1e-12 * np.linalg.norm(g)
            assert np.linalg.norm(np.cross(g.imag, x - y)) <= 1e-12 * np.linalg.norm(g)

    def test_grad_fd(self):
        x, y = np.array([0.3, 0.0, 0.0]), np.zeros(3)
        fd = oracle.finite_difference_gradient(lambda p: ac.phi(1.0, p, y), x, 1e-3)
        np.testing.assert_allclose(ac.grad_phi(1.0, x, y), fd, rtol=1e-8, atol=1e-12)

    @pytest.mark.parametrize("k, a", [(1.0, 0.3), (2.0, 0.05), (1.0, 1e-6)])
    def test_ball_integral(self, k, a):
        res = integrate_region(lambda y: ac.phi(k, np.zeros(3), y), [ball_constraint(np.zeros(3), a)],
                               singular_points=[np.zeros(3)], rtol=1e-8)
        assert ac.ball_integral_phi(k, a) == pytest.approx(res.value, rel=1e-6)


class TestMedium:
    def test_invalid_k(self, ball):
        with pytest.raises(ConfigurationError):
            ac.AcousticMedium(0.0, ball, 1.5)

    def test_contrast_floor(self, ball):
        ac.AcousticMedium(1.0, ball, 1.5, contrast_floor=0.4)
        with pytest.raises(ConfigurationError, match="contrast floor"):
            ac.AcousticMedium(1.0, ball, 1.05, contrast_floor=0.1)

    def test_profile_outside_is_one(self, ball):
        med = ac.AcousticMedium(1.0, ball, lambda p: 1.5 + 0.1 * p[:, 0])
        np.testing.assert_array_equal(med.n(np.array([[0.0, 0, 0.9], [2.0, 0, 0]])), 1)
        assert med.n(np.array([0.5, 0, 0]))[0] == pytest.approx(1.55)

    def test_negative_index_rejected(self, ball):
        with pytest.raises(ConfigurationError):
            ac.AcousticMedium(1.0, ball, -1.0)


class TestIncident:
    def test_plane_wave(self, grid16):
        u = ac.plane_wave(1.0, (0.0, 0.0, 1.0), grid16)
        np.testing.assert_allclose(np.abs(u.values), 1.0, rtol=1e-14)
        pw = ac.PlaneWave(2.0, (0.0, 0.0, 1.0))
        assert pw.evaluate(np.array([0.0, 0.0, np.pi / 2]))[0] == pytest.approx(-1.0)
        assert pw.evaluate(np.zeros(3))[0] == 1

    def test_plane_wave_unit(self, grid16):
        with pytest.raises(PreconditionError):
            ac.plane_wave(1.0, (0.0, 0.0, 2.0), grid16)

    def test_point_source_nodewise(self, grid16):
        z = np.array([0.01, 0.02, 1.3])
        u = ac.point_source(1.0, z, grid16)
        nodes = grid16.nodes()
        np.testing.assert_allclose(u.values, ac.phi(1.0, nodes, z), rtol=1e-14)

    def test_point_source_interior_rejected(self, grid16, ball):
        with pytest.raises(PreconditionError):
            ac.point_source(1.0, np.zeros(3), grid16, ball)

    def test_cell_averages_near_source(self, grid16):
        h = grid16.h
        z = np.array([0.0, 0.0, 0.9])
        c = np.array([[0.0, 0.0, 0.9 - 1.5 * h]])
        avg = ac.cell_averages_near(lambda p: ac.phi(1.0, p, z), c, h, z)[0]
        half = [(c[0, i] - h / 2, c[0, i] + h / 2) for i in range(3)]
        from scipy.integrate import tplquad

        re_ref = tplquad(lambda zz, yy, xx: ac.phi(1.0, np.array([xx, yy, zz]), z).real,
                         *half[0], *half[1], *half[2], epsabs=1e-10)[0] / h**3
        assert avg.real == pytest.approx(re_ref, rel=1e-4)


class TestOperator:
    def test_zero_contrast(self, ball, grid16):
        med = ac.AcousticMedium(1.0, ball, 1.0)
        out = ac.apply_K(med, ac.plane_wave(1.0, (1.0, 0, 0), grid16))
        assert np.max(np.abs(out.values)) == 0

    def test_linear(self, medium15, grid16, rng):
        f = ScalarGridField(grid16, rng.normal(size=grid16.dims) + 0j)
        a = 0.7 - 1.3j
        np.testing.assert_allclose(ac.apply_K(medium15, a * f).values, a * ac.apply_K(medium15, f).values,
                                   rtol=1e-12, atol=1e-14)

    def test_grid_must_cover(self, medium15):
        g = GridSpec.cube(16, half_width=0.8)
        with pytest.raises(ConfigurationError):
            ac.apply_K(medium15, ac.plane_wave(1.0, (1.0, 0, 0), g))

    def test_center_value_vs_quadrature(self, medium15):
        grid = GridSpec.cube(65, half_width=1.0)     # h ~ diam / 52, node at the origin
        ones = ScalarGridField(grid, np.ones(grid.dims, dtype=complex))
        centre = ac.apply_K(medium15, ones).values[32, 32, 32]
        ref = -(1 - 1.5) * ac.ball_integral_phi(1.0, 0.8)
        assert abs(centre - ref) / abs(ref) <= 1e-3

    def test_point_source_smoothing(self, medium15, grid32):
        z = np.array([0.0, 0.0, 0.8 + 1 / 16])
        w = ac.apply_K(medium15, ac.point_source(1.0, z, grid32, medium15.shape)).values
        assert np.all(np.isfinite(w))
        # neighbours of the node nearest to z differ by a bounded amount
        i = np.unravel_index(np.argmin(np.linalg.norm(grid32.nodes() - z, axis=-1)), grid32.dims)
        patch = np.abs(w[i[0] - 1:i[0] + 2, i[1] - 1:i[1] + 2, i[2] - 1:i[2] + 2])
        assert patch.max() / patch.min() < 1.5


class TestSolve:
    def test_homogeneous(self, ball, grid16):
        med = ac.AcousticMedium(1.0, ball, 1.0)
        inc = ac.plane_wave(1.0, (1.0, 0, 0), grid16)
        u = ac.solve_total_field(med, inc)
        np.testing.assert_array_equal(u.values, inc.values)

    def test_residual(self, medium15, plane_solution32):
        op = ac.AcousticOperator(medium15, plane_solution32.grid)
        u = plane_solution32.values
        inc = ac.plane_wave(1.0, (0.0, 0.0, 1.0), plane_solution32.grid).values
        r = (u - op.apply(u) - inc)[op.support]
        assert np.linalg.norm(r) / np.linalg.norm(inc[op.support]) <= 1e-8
        assert plane_solution32.info["residual"] <= 1e-8

    def test_convergence_error(self, medium15, grid16):
        with pytest.raises(ConvergenceError) as info:
            ac.solve_total_field(medium15, ac.plane_wave(1.0, (0, 0, 1.0), grid16), tol=1e-14, restart=2,
                                 maxiter=2)
        assert info.value.residual > 1e-14

    def test_bad_tol(self, medium15, grid16):
        with pytest.raises(PreconditionError):
            ac.solve_total_field(medium15, ac.plane_wave(1.0, (0, 0, 1.0), grid16), tol=0)


class TestFarField:
    def test_zero_contrast(self, ball, grid16):
        med = ac.AcousticMedium(1.0, ball, 1.0)
        u = ac.solve_total_field(med, ac.plane_wave(1.0, (1.0, 0, 0), grid16))
        assert np.max(np.abs(ac.far_field(med, u).values)) == 0

    def test_mie_32(self, medium15, plane_solution32):
        ff = ac.far_field(medium15, plane_solution32)
        ref = oracle.mie_far_field(0.8, 1.5, 1.0, (ff.directions, ff.weights))
        assert ff.relative_l2_error(ref) <= 3e-2

    def test_born_32(self, ball, grid32):
        med = ac.AcousticMedium(1.0, ball, 1.01)
        u = ac.solve_total_field(med, ac.plane_wave(1.0, (0, 0, 1.0), grid32))
        ff = ac.far_field(med, u)
        ref = oracle.born_far_field(0.8, -0.01, 1.0, ff.directions, (0, 0, 1.0))
        assert ff.relative_l2_error(ref) <= 2e-2

    def test_csv_roundtrip(self, medium15, plane_solution32, tmp_path):
        ff = ac.far_field(medium15, plane_solution32)
        ff.to_csv(tmp_path / "ff.csv")
        header = open(tmp_path / "ff.csv").readline().strip()
        assert header == "theta,phi,re,im,weight"
        back = ac.FarFieldScalar.from_csv(tmp_path / "ff.csv")
        np.testing.assert_allclose(back.values, ff.values, rtol=1e-15)
        np.testing.assert_allclose(back.directions, ff.directions, atol=1e-14)
        assert back.weights.sum() == pytest.approx(4 * np.pi, abs=1e-10)


class TestOffGrid:
    def test_zero_contrast(self, ball, grid16):
        med = ac.AcousticMedium(1.0, ball, 1.0)
        u = ac.solve_total_field(med, ac.plane_wave(1.0, (1.0, 0, 0), grid16))
        assert ac.eval_scattered(med, u, np.array([0, 0, 1.0])) == 0
        np.testing.assert_array_equal(ac.eval_grad_scattered(med, u, np.array([0, 0, 1.0])).value, 0)

    def test_interior_rejected(self, medium15, plane_solution32):
        with pytest.raises(PreconditionError):
            ac.eval_scattered(medium15, plane_solution32, np.array([0, 0, 0.5]))
        with pytest.raises(PreconditionError):
            ac.eval_grad_scattered(medium15, plane_solution32, np.array([0, 0, 0.5]))

    def test_far_consistency(self, medium15, plane_solution32):
        xhat = np.array([0.6, 0.0, 0.8])
        x = 10 * xhat
        usc = ac.eval_scattered(medium15, plane_solution32, x)
        ff = ac.far_field(medium15, plane_solution32, [xhat]).values[0]
        approx = np.exp(1j * 10) / 10 * ff
        assert abs(usc - approx) / abs(approx) <= 3e-2

    def test_continuity(self, medium15, plane_solution32):
        nu = np.array([0.0, 0.0, 1.0])
        x = np.array([0.0, 0.0, 0.85])
        a = ac.eval_scattered(medium15, plane_solution32, x)
        b = ac.eval_scattered(medium15, plane_solution32, x + plane_solution32.grid.h / 10 * nu)
        assert abs(a - b) <= 0.1 * abs(a)

    def test_gradient_fd(self, medium15, plane_solution32):
        x = np.array([0.3, -0.2, 1.05])
        step = plane_solution32.grid.h / 4
        fd = oracle.finite_difference_gradient(
            lambda p: ac.eval_scattered(medium15, plane_solution32, p, rtol=1e-7), x, step)
        g = ac.eval_grad_scattered(medium15, plane_solution32, x, rtol=1e-7).value
        assert np.linalg.norm(g - fd) / np.linalg.norm(fd) <= 1e-3

    def test_gradient_bounded_along_path(self, medium15, plane_solution32):
        nu = np.array([0.0, 0.0, 1.0])
        mags = [np.linalg.norm(ac.eval_grad_scattered(medium15, plane_solution32,
                                                      np.array([0, 0, 0.8]) + nu / j, rtol=1e-5).value)
                for j in (2, 4, 8, 16)]
        assert max(mags) <= 2 * min(mags)


class TestReciprocity:
    def test_homogeneous(self, ball, grid16):
        med = ac.AcousticMedium(1.0, ball, 1.0)
        assert ac.mixed_reciprocity_residual(med, (0, 0, 1.5), (0, 0, -1.0), grid16) == 0

    @pytest.mark.parametrize("z, d", [((0, 0, 1.5), (0, 0, -1.0)), ((1.2, 0.3, 0.1), (0.6, 0.0, 0.8))])
    def test_mixed_32(self, medium15, grid32, z, d):
        assert ac.mixed_reciprocity_residual(medium15, z, d, grid32) <= 2e-2

    def test_transmission_jumps_small(self, medium15, plane_solution32):
        jumps = ac.transmission_jumps(medium15, plane_solution32, (0, 0, 0.8), (0, 0, 1.0),
                                      plane_solution32.grid.h)
        assert jumps["u"] <= 5e-2 and jumps["normal_derivative"] <= 1e-1
