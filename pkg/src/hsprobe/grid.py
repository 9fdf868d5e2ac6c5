"""Uniform Cartesian grids, grid fields and cell-averaged material data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError
from .geometry import inside, signed_distance


@dataclass(frozen=True)
class GridSpec:
    """Nodes ``origin + h * (i, j, k)`` at the centres of cubic cells of side ``h``."""

    origin: tuple
    h: float
    dims: tuple

    def __post_init__(self):
        origin = tuple(float(v) for v in np.asarray(self.origin, dtype=float).ravel())
        dims = tuple(int(v) for v in np.asarray(self.dims).ravel())
        if len(origin) != 3 or len(dims) != 3:
            raise ConfigurationError("grid origin and dims must have three entries")
        if not self.h > 0:
            raise ConfigurationError(f"grid spacing must be positive, got {self.h!r}")
        if any(n < 1 for n in dims):
            raise ConfigurationError(f"grid dims must be positive, got {dims}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def cube(cls, n, half_width=1.0, center=(0.0, 0.0, 0.0)):
        """``n**3`` cells tiling the cube ``center +- half_width``."""
        h = 2.0 * half_width / n
        origin = np.asarray(center, dtype=float) - half_width + 0.5 * h
        return cls(tuple(origin), h, (n, n, n))

    @classmethod
    def enclosing(cls, shape, n, margin=0.25):
        """Cube around the shape's bounding box padded by ``margin`` of its size."""
        lo, hi = shape.bounding_box()
        half = 0.5 * float(np.max(hi - lo)) * (1.0 + margin)
        return cls.cube(n, half, 0.5 * (lo + hi))

    @property
    def size(self):
        return int(np.prod(self.dims))

    @property
    def cell_volume(self):
        return self.h ** 3

    @property
    def lo(self):
        return np.asarray(self.origin)

    @property
    def hi(self):
        return self.lo + self.h * (np.asarray(self.dims) - 1)

    def axes(self):
        return [self.origin[i] + self.h * np.arange(self.dims[i]) for i in range(3)]

    def nodes(self):
        """Node coordinates with shape ``dims + (3,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def check_covers(self, shape, margin_cells=2.0):
        lo, hi = shape.bounding_box()
        gap = min(np.min(lo - self.lo), np.min(self.hi - hi))
        if gap < margin_cells * self.h:
            raise ConfigurationError(
                f"grid does not cover the shape with a margin of {margin_cells} cells "
                f"(gap {gap:.4g}, h {self.h:.4g})")

    def to_dict(self):
        return {"origin": list(self.origin), "h": self.h, "dims": list(self.dims)}

    @classmethod
    def from_dict(cls, data):
        if "n" in data:
            return cls.cube(int(data["n"]), float(data.get("half_width", 1.0)),
                            tuple(data.get("center", (0.0, 0.0, 0.0))))
        try:
            return cls(tuple(data["origin"]), float(data["h"]), tuple(data["dims"]))
        except KeyError as exc:
            raise ConfigurationError(f"grid is missing field {exc.args[0]!r}") from None


@dataclass
class GridField:
    """Complex samples on a grid; ``values`` has shape ``dims`` or ``dims + (3,)``.

    Solvers also attach the ``incident`` field description (an object with
    ``evaluate(points)``) and the grid samples of the ``scattered`` part, so
    off-grid evaluations can combine the analytic incident field with an
    interpolated scattered field.
    """

    grid: GridSpec
    values: np.ndarray
    incident: object = field(default=None, repr=False)
    scattered: np.ndarray = field(default=None, repr=False)
    info: dict = field(default_factory=dict, repr=False)

    components = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        expected = self.grid.dims + ((3,) if self.components == 3 else ())
        if self.values.shape != expected:
            raise ConfigurationError(
                f"field shape {self.values.shape} does not match grid {expected}")

    def _new(self, values):
        return type(self)(self.grid, values)

    def __add__(self, other):
        return self._new(self.values + other.values)

    def __sub__(self, other):
        return self._new(self.values - other.values)

    def __mul__(self, scalar):
        return self._new(self.values * scalar)

    __rmul__ = __mul__

    def interpolator(self, which="values", order=3):
        """Callable spline interpolant of ``values`` or ``scattered``."""
        data = self.values if which == "values" else self.scattered
        if data is None:
            raise ConfigurationError(f"field has no {which!r} samples")
        return SplineInterpolator(self.grid, data, order)


class SplineInterpolator:
    """Tensor-product spline through complex grid samples (prefiltered once)."""

    def __init__(self, grid, data, order=3):
        self.grid = grid
        self.order = order
        data = np.asarray(data, dtype=complex)
        self.vector = data.ndim == 4
        comps = [data[..., c] for c in range(data.shape[-1])] if self.vector else [data]
        self.coeffs = []
        for comp in comps:
            pair = []
            for part in (comp.real, comp.imag):
                if order > 1:
                    part = ndimage.spline_filter(part, order=order, mode="nearest")
                pair.append(np.ascontiguousarray(part))
            self.coeffs.append(pair)

    def __call__(self, points):
        pts = np.atleast_2d(points)
        idx = ((pts - self.grid.lo) / self.grid.h).T
        out = [ndimage.map_coordinates(re, idx, order=self.order, mode="nearest", prefilter=False)
               + 1j * ndimage.map_coordinates(im, idx, order=self.order, mode="nearest", prefilter=False)
               for re, im in self.coeffs]
        return np.stack(out, axis=-1) if self.vector else out[0]


class ScalarGridField(GridField):
    components = 1


class VectorGridField(GridField):
    components = 3


def cell_average(grid, func, shape, subsamples=8, chunk=200_000):
    """Cell averages of ``func`` (zero outside ``shape``) on every grid cell.

    Cells whose centre is farther than half a diagonal from the boundary use
    the midpoint value; cut cells average ``subsamples**3`` interior points.
    """
    nodes = grid.nodes().reshape(-1, 3)
    sd = signed_distance(shape, nodes) if shape.kind == "ball" else _coarse_sd(shape, nodes, grid.h)
    halfdiag = 0.5 * np.sqrt(3.0) * grid.h
    vals = np.zeros(len(nodes), dtype=complex)
    interior = sd < -halfdiag
    if np.any(interior):
        vals[interior] = func(nodes[interior])
    cut = np.nonzero(np.abs(sd) <= halfdiag)[0]
    s = (np.arange(subsamples) + 0.5) / subsamples - 0.5
    offs = np.stack(np.meshgrid(s, s, s, indexing="ij"), axis=-1).reshape(-1, 3) * grid.h
    per = max(1, chunk // len(offs))
    for start in range(0, len(cut), per):
        idx = cut[start:start + per]
        pts = (nodes[idx, None, :] + offs[None]).reshape(-1, 3)
        mask = inside(shape, pts)
        fv = np.zeros(len(pts), dtype=complex)
        if np.any(mask):
            fv[mask] = func(pts[mask])
        vals[idx] = fv.reshape(len(idx), -1).mean(axis=1)
    return vals.reshape(grid.dims)


def _coarse_sd(shape, nodes, h):
    """Signed distance near the boundary, implicit value elsewhere (sign-correct)."""
    from .geometry import implicit

    g = np.asarray(implicit(shape, nodes))
    near = np.abs(g) < 2.0 * h
    out = g.copy()
    if np.any(near):
        out[near] = signed_distance(shape, nodes[near])
    return out
