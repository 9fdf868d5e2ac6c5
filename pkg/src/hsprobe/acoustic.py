"""Helmholtz kernels and the acoustic Lippmann-Schwinger solver.

The volume equation ``u = u_in - k^2 int (1 - n) Phi u`` is discretized on a
uniform grid with one unknown per cell: the contrast is cell averaged, the
kernel is sampled at cell offsets and the self cell uses the exact integral
of ``Phi`` over a ball of equal volume. The operator is applied by FFT and
inverted with restarted GMRES on the cells carrying contrast.

Off-grid quantities (scattered field and its gradient at exterior points)
are computed by adaptive cubature over ``D``. The analytic incident field is
used in the integrand and only the scattered part is interpolated from the
grid, which keeps near-singular point-source data exact.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .convolution import PaddedConvolution, offset_vectors
from .errors import ConfigurationError, ConvergenceError, PreconditionError, SingularityError
from .geometry import ShapeSpec, implicit, signed_distance
from .grid import GridSpec, ScalarGridField, cell_average
from .quadrature import OctreeIntegrator, gauss_legendre, shape_constraint, sphere_grid

#: Mixed reciprocity factor ``4 pi w_inf(-d, z) = u_sc(z, d)`` for this normalization.
MIXED_RECIPROCITY_FACTOR = 4.0 * np.pi


# --------------------------------------------------------------------------- kernels

def _distance(x, y):
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(diff, axis=-1)
    if np.any(r == 0):
        raise SingularityError("kernel evaluated at coincident points")
    return diff, r


def phi(k, x, y):
    """Outgoing Helmholtz fundamental solution ``exp(ikr) / (4 pi r)``."""
    _, r = _distance(x, y)
    return np.exp(1j * k * r) / (4 * np.pi * r)


def grad_phi(k, x, y):
    """Gradient of :func:`phi` with respect to ``x``."""
    diff, r = _distance(x, y)
    r = np.asarray(r)[..., None]
    return np.exp(1j * k * r) * (1j * k - 1.0 / r) / (4 * np.pi * r) * diff / r


def ball_integral_phi(k, radius):
    """``int_{|y|<radius} Phi(0, y) dy`` in closed form."""
    if k * radius < 1e-4:
        ka = k * radius
        return radius**2 * (0.5 + 1j * ka / 3 - ka**2 / 8)
    return (np.exp(1j * k * radius) * (1 - 1j * k * radius) - 1) / k**2


def equal_volume_radius(h):
    return h * (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0)


@functools.lru_cache(maxsize=4)
def _helmholtz_convolution(k, grid, workers):
    off = offset_vectors(grid)
    r = np.linalg.norm(off, axis=-1)
    r[0, 0, 0] = 1.0
    table = grid.cell_volume * np.exp(1j * k * r) / (4 * np.pi * r)
    table[0, 0, 0] = ball_integral_phi(k, equal_volume_radius(grid.h))
    return PaddedConvolution(grid, {"phi": table}, workers)


# --------------------------------------------------------------------------- media and incident fields

@dataclass(frozen=True)
class AcousticMedium:
    """Wavenumber, support and refractive index ``n`` (``1`` outside ``D``).

    ``index`` is either a constant or a vectorized callable ``n(points)``
    that is only evaluated inside the shape.
    """

    k: float
    shape: ShapeSpec
    index: object = 1.0
    contrast_floor: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise ConfigurationError(f"wavenumber must be positive, got {self.k!r}")
        if self.contrast_floor < 0:
            raise ConfigurationError("contrast floor must be non-negative")
        pts = _sample_near_boundary(self.shape)
        nv = self.n(pts)
        if np.any(np.real(nv) <= 0):
            raise ConfigurationError("refractive index must have positive real part in D")
        if self.contrast_floor > 0 and np.any(np.abs(1 - nv) < self.contrast_floor):
            raise ConfigurationError(
                f"|1 - n| drops below the contrast floor {self.contrast_floor} near the boundary")

    def n(self, x):
        pts = np.atleast_2d(x)
        out = np.ones(len(pts), dtype=complex)
        mask = np.asarray(implicit(self.shape, pts)) < 0
        if np.any(mask):
            out[mask] = self.index(pts[mask]) if callable(self.index) else self.index
        return out

    def contrast(self, x):
        """``1 - n(x)``; zero outside ``D``."""
        return 1.0 - self.n(x)

    @property
    def is_homogeneous(self):
        return not callable(self.index) and self.index == 1.0


def _sample_near_boundary(shape, count=200):
    """Deterministic points inside ``D`` within ``0.1 diam`` of the boundary."""
    from .geometry import boundary_point_along_ray, fibonacci_directions

    pts = []
    for i, d in enumerate(fibonacci_directions(count // 4)):
        sp = boundary_point_along_ray(shape, d)
        for frac in (0.01, 0.04, 0.07, 0.099):
            pts.append(sp.position - frac * shape.diameter * sp.normal)
    pts = np.array(pts)
    return pts[np.asarray(implicit(shape, pts)) < 0]


@dataclass(frozen=True)
class PlaneWave:
    k: float
    direction: tuple

    def evaluate(self, x):
        d = np.asarray(self.direction)
        return np.exp(1j * self.k * (np.atleast_2d(x) @ d))

    def gradient(self, x):
        d = np.asarray(self.direction)
        return 1j * self.k * self.evaluate(x)[:, None] * d


@dataclass(frozen=True)
class PointSource:
    k: float
    source: tuple

    def evaluate(self, x):
        return phi(self.k, np.atleast_2d(x), np.asarray(self.source))

    def gradient(self, x):
        return grad_phi(self.k, np.atleast_2d(x), np.asarray(self.source))


def _unit(d, name="direction"):
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-10:
        raise PreconditionError(f"{name} must be a unit vector")
    return d


def plane_wave(k, d, grid):
    """Samples of ``exp(ik x.d)`` at the grid nodes."""
    d = _unit(d)
    inc = PlaneWave(float(k), tuple(d))
    vals = inc.evaluate(grid.nodes().reshape(-1, 3)).reshape(grid.dims)
    return ScalarGridField(grid, vals, incident=inc)


def cell_averages_near(fun, centers, h, z, max_level=6, order=3):
    """Cell means of ``fun`` for cells close to the singular point ``z``.

    Each cell is split into ``2**L`` subcells per axis, with ``L`` growing
    as the cell approaches ``z`` (at most ``max_level``), and a tensor Gauss
    rule is applied on every subcell.
    """
    centers = np.atleast_2d(centers)
    dist = np.linalg.norm(centers - z, axis=-1) - 0.5 * np.sqrt(3.0) * h
    level = np.clip(np.ceil(np.log2(2.0 * h / np.maximum(dist, 1e-300))) + 1, 0, max_level).astype(int)
    gx, gw = gauss_legendre(order, -0.5, 0.5)
    out = None
    for lev in np.unique(level):
        idx = np.nonzero(level == lev)[0]
        ns = 2**lev
        sub = (np.arange(ns) + 0.5) / ns - 0.5
        loc = (sub[:, None] + gx[None] / ns).ravel()
        wl = np.tile(gw / ns, ns)
        pts = np.stack(np.meshgrid(loc, loc, loc, indexing="ij"), axis=-1).reshape(-1, 3) * h
        wts = np.einsum("i,j,k->ijk", wl, wl, wl).ravel()
        per = max(1, 400_000 // len(wts))
        for s in range(0, len(idx), per):
            ii = idx[s:s + per]
            vals = fun((centers[ii, None, :] + pts[None]).reshape(-1, 3))
            vals = vals.reshape((len(ii), len(wts)) + vals.shape[1:])
            avg = np.einsum("w,cw...->c...", wts, vals)
            if out is None:
                out = np.zeros((len(centers),) + avg.shape[1:], dtype=complex)
            out[ii] = avg
    return out


def point_source(k, z, grid, shape=None, near_radius=None):
    """Samples of ``Phi(x, z)`` at the nodes.

    With ``shape`` given the source must be exterior, and cells within
    ``near_radius`` of ``z`` (default five times its distance to ``D``)
    receive cell averages instead of midpoint samples.
    """
    z = np.asarray(z, dtype=float)
    inc = PointSource(float(k), tuple(z))
    nodes = grid.nodes().reshape(-1, 3)
    if np.any(np.all(nodes == z, axis=-1)):
        raise SingularityError("point source coincides with a grid node")
    vals = inc.evaluate(nodes)
    if shape is not None:
        dist = signed_distance(shape, z)
        if dist <= 0:
            raise PreconditionError(f"point source at {z.tolist()} is not exterior to the shape")
        radius = 5.0 * dist if near_radius is None else near_radius
        near = np.nonzero(np.linalg.norm(nodes - z, axis=-1) < radius)[0]
        near = near[np.asarray(implicit(shape, nodes[near])) < 0.5 * np.sqrt(3) * grid.h]
        if len(near):
            vals[near] = cell_averages_near(inc.evaluate, nodes[near], grid.h, z)
    return ScalarGridField(grid, vals.reshape(grid.dims), incident=inc)


# --------------------------------------------------------------------------- discrete operator

class AcousticOperator:
    """Discrete ``K`` on one grid: contrast cell averages plus the FFT kernel."""

    def __init__(self, medium, grid, workers=1):
        grid.check_covers(medium.shape)
        self.medium = medium
        self.grid = grid
        self.contrast = (np.zeros(grid.dims, dtype=complex) if medium.is_homogeneous
                         else cell_average(grid, medium.contrast, medium.shape))
        self.support = np.abs(self.contrast) > 0
        self.conv = _helmholtz_convolution(float(medium.k), grid, workers)

    def apply(self, values):
        """``K`` applied to a full grid array."""
        k2 = self.medium.k ** 2
        return -k2 * self.conv.apply("phi", self.contrast * values)

    def system(self):
        sup = self.support
        n = int(sup.sum())
        buf = np.zeros(self.grid.dims, dtype=complex)

        def matvec(v):
            buf[sup] = np.ravel(v)
            return np.ravel(v) - self.apply(buf)[sup]

        return LinearOperator((n, n), matvec=matvec, dtype=complex)


def apply_K(medium, field, workers=1):
    """Discrete volume potential ``-k^2 int (1 - n) Phi field`` at every node."""
    op = AcousticOperator(medium, field.grid, workers)
    return ScalarGridField(field.grid, op.apply(field.values))


def _gmres(A, b, tol, restart, maxiter):
    count = [0]

    def cb(_):
        count[0] += 1

    x, _info = gmres(A, b, x0=b.copy(), rtol=tol, atol=0.0, restart=restart,
                     maxiter=int(np.ceil(maxiter / restart)), callback=cb, callback_type="pr_norm")
    return x, count[0]


def solve_total_field(medium, incident, tol=1e-8, restart=30, maxiter=500, workers=1, operator=None):
    """Solve ``(I - K) u = u_in`` for the total field.

    Returns the total field at every node together with its scattered part
    ``K u``; ``info`` records the relative residual on the contrast cells.
    """
    if not tol > 0:
        raise PreconditionError("tolerance must be positive")
    grid = incident.grid
    op = operator or AcousticOperator(medium, grid, workers)
    if not np.any(op.support):
        return ScalarGridField(grid, incident.values.copy(), incident=incident.incident,
                               scattered=np.zeros(grid.dims, dtype=complex),
                               info={"residual": 0.0, "iterations": 0})
    b = incident.values[op.support]
    A = op.system()
    x, its = _gmres(A, b, tol, restart, maxiter)
    res = np.linalg.norm(A.matvec(x) - b) / np.linalg.norm(b)
    if not res <= tol:
        raise ConvergenceError(f"GMRES stopped at relative residual {res:.3e} > {tol:.1e} "
                               f"after {its} iterations", residual=res, iterations=its)
    u = np.zeros(grid.dims, dtype=complex)
    u[op.support] = x
    scattered = op.apply(u)
    total = incident.values + scattered
    total[op.support] = x
    return ScalarGridField(grid, total, incident=incident.incident, scattered=scattered,
                           info={"residual": float(res), "iterations": its})


# --------------------------------------------------------------------------- far fields

@dataclass
class FarFieldScalar:
    directions: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if np.any(np.abs(np.linalg.norm(self.directions, axis=-1) - 1) > 1e-12):
            raise PreconditionError("far-field directions must be unit vectors")

    @property
    def theta(self):
        return np.arccos(np.clip(self.directions[:, 2], -1, 1))

    @property
    def phi(self):
        return np.mod(np.arctan2(self.directions[:, 1], self.directions[:, 0]), 2 * np.pi)

    def l2_norm(self):
        return float(np.sqrt(np.sum(self.weights * np.abs(self.values) ** 2)))

    def relative_l2_error(self, reference):
        ref = reference.values if isinstance(reference, FarFieldScalar) else np.asarray(reference)
        num = np.sum(self.weights * np.abs(self.values - ref) ** 2)
        den = np.sum(self.weights * np.abs(ref) ** 2)
        return float(np.sqrt(num / den))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "phi", "re", "im", "weight"])
            for row in zip(self.theta, self.phi, self.values.real, self.values.imag, self.weights):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        th, ph = data[:, 0], data[:, 1]
        dirs = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        return cls(dirs, data[:, 4], data[:, 2] + 1j * data[:, 3])


def direction_set(directions=None, n_theta=16, n_phi=32):
    """``(directions, weights)``; explicit lists get equal weights summing to ``4 pi``."""
    if directions is None:
        dirs, w, _, _ = sphere_grid(n_theta, n_phi)
        return dirs, w
    if isinstance(directions, tuple) and len(directions) == 2:
        return np.atleast_2d(directions[0]), np.asarray(directions[1])
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    return dirs, np.full(len(dirs), 4 * np.pi / len(dirs))


def far_field(medium, total, directions=None, chunk=64):
    """``u_inf(x) = -k^2/(4 pi) int (1 - n) exp(-ik x.y) u(y) dy`` by the grid rule."""
    dirs, w = direction_set(directions)
    grid = total.grid
    op = _operator_for(medium, grid)
    sup = op.support
    vals = np.zeros(len(dirs), dtype=complex)
    if np.any(sup):
        y = grid.nodes()[sup]
        dens = op.contrast[sup] * total.values[sup] * grid.cell_volume
        pref = -medium.k**2 / (4 * np.pi)
        for s in range(0, len(dirs), chunk):
            ph = np.exp(-1j * medium.k * (dirs[s:s + chunk] @ y.T))
            vals[s:s + chunk] = pref * (ph @ dens)
    return FarFieldScalar(dirs, w, vals)


@functools.lru_cache(maxsize=4)
def _cached_operator(medium, grid):
    return AcousticOperator(medium, grid)


def _operator_for(medium, grid):
    try:
        return _cached_operator(medium, grid)
    except TypeError:  # unhashable index profile
        return AcousticOperator(medium, grid)


# --------------------------------------------------------------------------- off-grid evaluation

def _field_at(total):
    """Callable ``u(y)``: analytic incident part plus interpolated scattered part."""
    if total.incident is not None and total.scattered is not None:
        inc = total.incident
        interp = total.interpolator("scattered")
        return lambda y: inc.evaluate(y) + interp(y)
    interp = total.interpolator("values")
    return interp


def _check_exterior(shape, x):
    x = np.asarray(x, dtype=float)
    if signed_distance(shape, x) <= 0:
        raise PreconditionError(f"evaluation point {x.tolist()} is not exterior to the shape")
    return x


def _volume_integral(medium, x, integrand, rtol, max_depth, exterior=True):
    # an interior point is an integrable singularity; a smaller forced-refinement halo suffices
    integ = OctreeIntegrator([shape_constraint(medium.shape)], rtol=rtol, max_depth=max_depth,
                             singular_points=[x], near_factor=4.0 if exterior else 1.0)
    res = integ.integrate(integrand)
    return res


def eval_scattered(medium, total, x, rtol=1e-6, max_depth=10, exterior=True):
    """``u_sc(x) = -k^2 int_D (1 - n) Phi(x, y) u(y) dy`` at an exterior point.

    ``exterior=False`` lifts the exterior check; interior points are then
    handled as an integrable singularity of the cubature.
    """
    x = _check_exterior(medium.shape, x) if exterior else np.asarray(x, dtype=float)
    if medium.is_homogeneous:
        return 0j
    u = _field_at(total)
    k = medium.k

    def f(y):
        return medium.contrast(y) * phi(k, x, y) * u(y)

    res = _volume_integral(medium, x, f, rtol, max_depth, exterior)
    return complex(-k**2 * res.value)


@dataclass
class GradientResult:
    value: np.ndarray
    converged: bool
    evaluations: int

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.value, dtype=dtype)


def eval_grad_scattered(medium, total, x, rtol=1e-6, max_depth=10, exterior=True):
    """Gradient of the scattered field at an exterior point.

    Returns a :class:`GradientResult`; ``converged`` is ``False`` when the
    cubature hit its depth budget (an accuracy warning, not an error).
    """
    x = _check_exterior(medium.shape, x) if exterior else np.asarray(x, dtype=float)
    if medium.is_homogeneous:
        return GradientResult(np.zeros(3, dtype=complex), True, 0)
    u = _field_at(total)
    k = medium.k

    def f(y):
        return (medium.contrast(y) * u(y))[:, None] * grad_phi(k, x, y)

    res = _volume_integral(medium, x, f, rtol, max_depth, exterior)
    return GradientResult(-k**2 * np.asarray(res.value), res.converged, res.evaluations)


def mixed_reciprocity_residual(medium, z, d, grid, tol=1e-8, factor=MIXED_RECIPROCITY_FACTOR,
                               eps=1e-14, workers=1):
    """``|factor * w_inf(-d, z) - u_sc(z, d)| / max(|u_sc(z, d)|, eps)``.

    ``w_inf`` is the far field of the point source at ``z`` and ``u_sc`` the
    scattered field of the plane wave with direction ``d``; the two come from
    independent forward solves.
    """
    d = _unit(d)
    z = _check_exterior(medium.shape, z)
    if medium.is_homogeneous:
        return 0.0
    op = AcousticOperator(medium, grid, workers)
    ps = solve_total_field(medium, point_source(medium.k, z, grid, medium.shape), tol, operator=op)
    w_inf = far_field(medium, ps, (np.atleast_2d(-d), np.array([4 * np.pi]))).values[0]
    pw = solve_total_field(medium, plane_wave(medium.k, d, grid), tol, operator=op)
    u_sc = eval_scattered(medium, pw, z)
    return float(abs(factor * w_inf - u_sc) / max(abs(u_sc), eps))


def transmission_jumps(medium, total, point, normal, s, rtol=1e-6, max_depth=10):
    """Relative jumps of ``u`` and ``d u / d normal`` across the boundary at ``point``.

    Each one-sided trace is extrapolated linearly from samples at distances
    ``s`` and ``2 s`` along ``+normal`` and ``-normal``, so the smooth part of
    the field cancels to second order and only a genuine jump survives.
    """
    nu = _unit(normal, "normal")
    point = np.asarray(point, dtype=float)
    inc = total.incident

    def sample(x):
        u = inc.evaluate(x)[0] + eval_scattered(medium, total, x, rtol, max_depth, exterior=False)
        g = inc.gradient(x)[0] + eval_grad_scattered(medium, total, x, rtol, max_depth,
                                                     exterior=False).value
        return u, g @ nu

    traces = []
    for side in (1.0, -1.0):
        near, far = sample(point + side * s * nu), sample(point + 2 * side * s * nu)
        traces.append((2 * near[0] - far[0], 2 * near[1] - far[1]))
    (u_out, d_out), (u_in, d_in) = traces
    return {"u": float(abs(u_out - u_in) / max(abs(u_out), abs(u_in))),
            "normal_derivative": float(abs(d_out - d_in) / max(abs(d_out), abs(d_in)))}
