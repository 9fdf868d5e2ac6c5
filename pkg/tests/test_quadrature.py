import numpy as np
import pytest

from hsprobe.geometry import ShapeSpec
from hsprobe.quadrature import (OctreeIntegrator, ball_constraint, gauss_legendre, halfspace_constraint,
                                integrate_region, shape_constraint, sphere_grid)


class TestRules:
    @pytest.mark.parametrize("order", [2, 4, 8])
    def test_gauss_exact_for_polynomials(self, order):
        x, w = gauss_legendre(order, 0.0, 2.0)
        for p in range(2 * order):
            assert np.sum(w * x**p) == pytest.approx(2.0 ** (p + 1) / (p + 1), rel=1e-13)

    @pytest.mark.parametrize("n_theta, n_phi", [(16, 32), (8, 12), (24, 48)])
    def test_sphere_grid(self, n_theta, n_phi):
        dirs, w, theta, phi = sphere_grid(n_theta, n_phi)
        assert w.sum() == pytest.approx(4 * np.pi, abs=1e-10)
        assert np.max(np.abs(np.linalg.norm(dirs, axis=1) - 1)) <= 1e-12
        # second moments of the unit sphere
        assert np.sum(w * dirs[:, 2] ** 2) == pytest.approx(4 * np.pi / 3, rel=1e-12)


class TestOctree:
    @pytest.mark.parametrize("radius", [0.3, 0.8, 1.0])
    def test_ball_volume(self, radius):
        res = integrate_region(lambda y: np.ones(len(y)), [ball_constraint(np.zeros(3), radius)], rtol=1e-8)
        assert res.value == pytest.approx(4 / 3 * np.pi * radius**3, rel=1e-7)

    def test_half_ball_volume(self):
        c = np.zeros(3)
        cons = [ball_constraint(c, 0.5), halfspace_constraint(c, (0, 0, 1.0), c - 0.5, c + 0.5)]
        res = integrate_region(lambda y: np.ones(len(y)), cons, rtol=1e-8)
        assert res.value == pytest.approx(2 / 3 * np.pi * 0.5**3, rel=1e-8)

    def test_second_moment_of_ellipsoid(self):
        e = ShapeSpec.ellipsoid((0.5, 0.7, 0.9))
        res = integrate_region(lambda y: y[:, 2] ** 2, [shape_constraint(e)], rtol=1e-8)
        assert res.value == pytest.approx(4 * np.pi / 15 * 0.5 * 0.7 * 0.9**3, rel=1e-6)

    def test_vector_valued(self):
        res = integrate_region(lambda y: np.stack([np.ones(len(y)), y[:, 0] ** 2], axis=-1),
                               [ball_constraint(np.zeros(3), 1.0)], rtol=1e-8)
        np.testing.assert_allclose(res.value, [4 / 3 * np.pi, 4 * np.pi / 15], rtol=1e-7)

    def test_empty_region(self):
        cons = [ball_constraint(np.zeros(3), 0.2), ball_constraint(np.array([1.0, 0, 0]), 0.2)]
        assert integrate_region(lambda y: np.ones(len(y)), cons).value == 0

    def test_deterministic(self):
        z = np.array([0.0, 0.0, 0.55])
        integ = OctreeIntegrator([ball_constraint(np.zeros(3), 0.5)], singular_points=[z])
        f = lambda y: 1 / np.linalg.norm(y - z, axis=-1) ** 3  # noqa: E731
        a, b = integ.integrate(f), integ.integrate(f)
        assert a.value == b.value and a.evaluations == b.evaluations

    def test_interior_singularity_integrable(self):
        # int_{|y|<1} 1/|y| dy = 2 pi
        res = integrate_region(lambda y: 1 / np.linalg.norm(y, axis=-1), [ball_constraint(np.zeros(3), 1.0)],
                               singular_points=[np.zeros(3)], max_depth=8)
        assert res.value == pytest.approx(2 * np.pi, rel=1e-5)
