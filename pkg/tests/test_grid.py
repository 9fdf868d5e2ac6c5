import numpy as np
import pytest

from hsprobe.convolution import PaddedConvolution, offset_vectors
from hsprobe.errors import ConfigurationError
from hsprobe.geometry import ShapeSpec
from hsprobe.grid import GridSpec, ScalarGridField, VectorGridField, cell_average


class TestGridSpec:
    def test_cube_layout(self):
        g = GridSpec.cube(8, half_width=1.0)
        assert g.h == 0.25
        np.testing.assert_allclose(g.lo, -0.875)
        np.testing.assert_allclose(g.hi, 0.875)
        assert g.nodes().shape == (8, 8, 8, 3)
        assert g.size == 512

    @pytest.mark.parametrize("bad", [dict(origin=(0, 0), h=1.0, dims=(2, 2, 2)),
                                     dict(origin=(0, 0, 0), h=0.0, dims=(2, 2, 2)),
                                     dict(origin=(0, 0, 0), h=1.0, dims=(2, 0, 2))])
    def test_invalid(self, bad):
        with pytest.raises(ConfigurationError):
            GridSpec(**bad)

    def test_roundtrip(self):
        g = GridSpec.cube(12, 1.5, (0.1, 0.2, 0.3))
        assert GridSpec.from_dict(g.to_dict()) == g
        assert GridSpec.from_dict({"n": 12, "half_width": 1.5, "center": [0.1, 0.2, 0.3]}) == g

    def test_covers(self):
        GridSpec.cube(32).check_covers(ShapeSpec.ball(0.8))
        with pytest.raises(ConfigurationError, match="margin"):
            GridSpec.cube(32, half_width=0.82).check_covers(ShapeSpec.ball(0.8))

    def test_enclosing(self):
        s = ShapeSpec.ellipsoid((0.5, 0.7, 1.2))
        GridSpec.enclosing(s, 32).check_covers(s)


class TestFields:
    def test_shape_checked(self):
        g = GridSpec.cube(4)
        with pytest.raises(ConfigurationError):
            ScalarGridField(g, np.zeros((4, 4, 3)))
        with pytest.raises(ConfigurationError):
            VectorGridField(g, np.zeros((4, 4, 4)))

    def test_arithmetic(self):
        g = GridSpec.cube(4)
        a = ScalarGridField(g, np.ones(g.dims))
        b = 2 * a + a - a
        np.testing.assert_array_equal(b.values, 2)

    def test_spline_quadratic_interior(self):
        g = GridSpec.cube(24)
        x = g.nodes()
        f = ScalarGridField(g, (x[..., 0] ** 2 + 1j * x[..., 1] * x[..., 2]))
        pts = np.array([[0.1, -0.2, 0.33], [0.0, 0.4, -0.5]])
        np.testing.assert_allclose(f.interpolator()(pts), pts[:, 0] ** 2 + 1j * pts[:, 1] * pts[:, 2], atol=1e-5)

    def test_vector_spline(self):
        g = GridSpec.cube(16)
        x = g.nodes()
        f = VectorGridField(g, x.astype(complex))
        pts = np.array([[0.1, -0.2, 0.33]])
        np.testing.assert_allclose(f.interpolator()(pts), pts, atol=1e-4)

    def test_missing_scattered(self):
        g = GridSpec.cube(4)
        with pytest.raises(ConfigurationError):
            ScalarGridField(g, np.zeros(g.dims)).interpolator("scattered")

    @pytest.mark.parametrize("n", [16, 32])
    def test_cell_average_volume(self, n):
        g = GridSpec.cube(n)
        s = ShapeSpec.ball(0.8)
        avg = cell_average(g, lambda p: np.ones(len(p)), s)
        vol = avg.real.sum() * g.cell_volume
        assert vol == pytest.approx(4 / 3 * np.pi * 0.8**3, rel=2e-3)
        assert avg.real.min() >= 0 and avg.real.max() <= 1


class TestConvolution:
    def test_offsets(self):
        g = GridSpec.cube(4)
        off = offset_vectors(g)
        assert off.shape == (8, 8, 8, 3)
        np.testing.assert_array_equal(off[0, 0, 0], 0)
        assert off[1, 0, 0, 0] == pytest.approx(g.h)
        assert off[7, 0, 0, 0] == pytest.approx(-g.h)

    def test_matches_direct_sum(self, rng):
        g = GridSpec((0, 0, 0), 0.3, (3, 4, 5))
        off = offset_vectors(g)
        r = np.linalg.norm(off, axis=-1)
        table = np.exp(-r) * (1 + 0.5j * off[..., 0])
        conv = PaddedConvolution(g, {"k": table.copy()})
        f = rng.normal(size=g.dims) + 1j * rng.normal(size=g.dims)
        out = conv.apply("k", f)
        nodes = g.nodes().reshape(-1, 3)
        ff = f.ravel()
        d = nodes[:, None, :] - nodes[None, :, :]
        kern = np.exp(-np.linalg.norm(d, axis=-1)) * (1 + 0.5j * d[..., 0])
        np.testing.assert_allclose(out.ravel(), kern @ ff, rtol=1e-12, atol=1e-12)
