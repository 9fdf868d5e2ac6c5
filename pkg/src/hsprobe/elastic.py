"""Navier fundamental tensor, Kelvin matrix and the elastic volume solver.

The background medium has Lame constants ``lam, mu`` and unit density; the
scatterer only changes the density, ``u = u_in - omega^2 int (1 - rho) Pi u``.
Gradients are returned as Jacobians ``J[..., a, c] = d u_a / d x_c``.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .acoustic import (_check_exterior, _gmres, _unit, cell_averages_near, direction_set,
                       equal_volume_radius)
from .convolution import PaddedConvolution, offset_vectors
from .errors import ConfigurationError, ConvergenceError, PreconditionError, SingularityError
from .geometry import ShapeSpec, implicit, signed_distance
from .grid import VectorGridField, cell_average
from .quadrature import OctreeIntegrator, shape_constraint

# Below this value of k_max * r the shear-minus-pressure kernel is summed as a series.
_SERIES_SWITCH = 0.1
_SERIES_TERMS = 24
_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class KelvinConstants:
    alpha: float
    beta: float


def kelvin_constants(lam, mu):
    if not mu > 0 or not lam + 2 * mu > 0:
        raise ConfigurationError(f"invalid Lame constants lambda={lam}, mu={mu}")
    den = 8 * np.pi * mu * (lam + 2 * mu)
    return KelvinConstants((lam + 3 * mu) / den, (lam + mu) / den)


@dataclass(frozen=True)
class ElasticMedium:
    """Homogeneous Lame background, density ``rho`` inside ``D`` (``1`` outside)."""

    lam: float
    mu: float
    omega: float
    shape: ShapeSpec
    density: object = 1.0
    contrast_floor: float = 0.0

    def __post_init__(self):
        if not self.mu > 0 or not 2 * self.mu + 3 * self.lam > 0:
            raise ConfigurationError("need mu > 0 and 2 mu + 3 lambda > 0")
        if not self.omega > 0:
            raise ConfigurationError("frequency must be positive")
        if self.contrast_floor < 0:
            raise ConfigurationError("contrast floor must be non-negative")
        from .acoustic import _sample_near_boundary

        if self.contrast_floor > 0:
            rv = self.rho(_sample_near_boundary(self.shape))
            if np.any(np.abs(1 - rv) < self.contrast_floor):
                raise ConfigurationError("|1 - rho| drops below the contrast floor near the boundary")

    @property
    def k_s(self):
        return self.omega / np.sqrt(self.mu)

    @property
    def k_p(self):
        return self.omega / np.sqrt(self.lam + 2 * self.mu)

    @property
    def consts(self):
        return kelvin_constants(self.lam, self.mu)

    def rho(self, x):
        pts = np.atleast_2d(x)
        out = np.ones(len(pts), dtype=complex)
        mask = np.asarray(implicit(self.shape, pts)) < 0
        if np.any(mask):
            out[mask] = self.density(pts[mask]) if callable(self.density) else self.density
        return out

    def contrast(self, x):
        return 1.0 - self.rho(x)

    @property
    def is_homogeneous(self):
        return not callable(self.density) and self.density == 1.0


# --------------------------------------------------------------------------- kernels

def _geometry(x, y):
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(diff, axis=-1)
    if np.any(r == 0):
        raise SingularityError("kernel evaluated at coincident points")
    return diff / r[..., None], r


def kelvin_tensor(consts, x, y):
    """``alpha I / r + beta xbar xbar^T / r`` with ``xbar = (x - y)/r``."""
    xb, r = _geometry(x, y)
    eye = np.eye(3)
    return (consts.alpha * eye + consts.beta * xb[..., :, None] * xb[..., None, :]) / r[..., None, None]


def grad_kelvin_apply(consts, x, y, b):
    """Jacobian ``J[a, c] = d/dx_c (Pi0(x, y) b)_a``."""
    xb, r = _geometry(x, y)
    b = np.broadcast_to(np.asarray(b, dtype=float), xb.shape)
    s = np.sum(xb * b, axis=-1)[..., None, None]
    eye = np.eye(3)
    outer = lambda u, v: u[..., :, None] * v[..., None, :]  # noqa: E731
    m = -consts.alpha * outer(b, xb) + consts.beta * (s * eye + outer(xb, b) - 3 * s * outer(xb, xb))
    return m / (r**2)[..., None, None]


def grad_kelvin_contract(consts, x, y, b):
    """Closed form of ``J v`` with ``J = grad_kelvin_apply`` and ``v = Pi0 b``."""
    xb, r = _geometry(x, y)
    b = np.broadcast_to(np.asarray(b, dtype=float), xb.shape)
    a, be = consts.alpha, consts.beta
    s = np.sum(xb * b, axis=-1)[..., None]
    bb = np.sum(b * b, axis=-1)[..., None]
    return (-a**2 * s * b + (a * be * bb - (3 * a * be + be**2) * s**2) * xb) / (r**3)[..., None]


def _radial_derivs(k, r):
    """``g', g'', g'''`` of ``g(r) = exp(ikr)/(4 pi r)``."""
    e = np.exp(1j * k * r) / (4 * np.pi)
    kr = k * r
    d1 = e * (1j * kr - 1) / r**2
    d2 = e * (-kr**2 - 2j * kr + 2) / r**3
    d3 = e * (-1j * kr**3 + 3 * kr**2 + 6j * kr - 6) / r**4
    return d1, d2, d3


def _difference_terms(medium, r):
    """``(A, B, A', (A - B)/r)`` for ``G = Phi_ks - Phi_kp``.

    ``A = G''`` and ``B = G'/r``; a power series avoids the cancellation of
    the two ``1/r`` singular kernels at small ``r``.
    """
    ks, kp = medium.k_s, medium.k_p
    r = np.asarray(r, dtype=float)
    A = np.empty(r.shape, dtype=complex)
    B = np.empty_like(A)
    A1 = np.empty_like(A)
    AmB = np.empty_like(A)
    small = ks * r < _SERIES_SWITCH
    big = ~small
    if np.any(big):
        rb = r[big]
        s1, s2, s3 = _radial_derivs(ks, rb)
        p1, p2, p3 = _radial_derivs(kp, rb)
        A[big] = s2 - p2
        B[big] = (s1 - p1) / rb
        A1[big] = s3 - p3
        AmB[big] = (A[big] - B[big]) / rb
    if np.any(small):
        rs = r[small]
        m = np.arange(1, _SERIES_TERMS + 1)
        from scipy.special import factorial

        c = ((1j * ks) ** m - (1j * kp) ** m) / (4 * np.pi * factorial(m))
        pw = rs[:, None] ** (m[None] - 3.0)
        A[small] = pw @ (c * (m - 1) * (m - 2))
        B[small] = pw @ (c * (m - 1))
        A1[small] = (pw / rs[:, None]) @ (c * (m - 1) * (m - 2) * (m - 3))
        AmB[small] = (pw / rs[:, None]) @ (c * (m - 1) * (m - 3))
    return A, B, A1, AmB


def navier_tensor(medium, x, y):
    """``Pi = Phi_ks I / mu + grad grad (Phi_ks - Phi_kp) / omega^2``."""
    xb, r = _geometry(x, y)
    A, B, _, _ = _difference_terms(medium, r)
    eye = np.eye(3)
    ks = medium.k_s
    phis = np.exp(1j * ks * r) / (4 * np.pi * r)
    xx = xb[..., :, None] * xb[..., None, :]
    hess = A[..., None, None] * xx + B[..., None, None] * (eye - xx)
    return phis[..., None, None] * eye / medium.mu + hess / medium.omega**2


def grad_navier(medium, x, y):
    """``T[..., a, b, c] = d/dx_c Pi_ab(x, y)``."""
    xb, r = _geometry(x, y)
    _, _, A1, AmB = _difference_terms(medium, r)
    g1, _, _ = _radial_derivs(medium.k_s, r)
    eye = np.eye(3)
    xa = xb[..., :, None, None]
    xbb = xb[..., None, :, None]
    xc = xb[..., None, None, :]
    sym = (eye[:, None, :] * xbb + eye[None, :, :] * xa + eye[:, :, None] * xc - 3 * xa * xbb * xc)
    third = A1[..., None, None, None] * xa * xbb * xc + AmB[..., None, None, None] * sym
    first = (g1[..., None, None, None] / medium.mu) * eye[:, :, None] * xc
    return first + third / medium.omega**2


def grad_navier_apply(medium, x, y, b):
    """Jacobian ``J[..., a, c] = d/dx_c (Pi(x, y) b)_a`` for complex ``b``."""
    return np.einsum("...abc,...b->...ac", grad_navier(medium, x, y), b)


def regular_limit(medium):
    """``lim_{r -> 0} (Pi - Pi0)``, a multiple of the identity."""
    ks, kp, w = medium.k_s, medium.k_p, medium.omega
    return (1j * ks / (4 * np.pi * medium.mu) - 1j * (ks**3 - kp**3) / (12 * np.pi * w**2)) * np.eye(3)


# --------------------------------------------------------------------------- traction

def traction_from_jacobian(lam, mu, jac, nu):
    """``2 mu (nu.grad) u + lam nu div u + mu nu x curl u`` from ``J = grad u``."""
    jac = np.asarray(jac)
    nu = np.asarray(nu, dtype=float)
    curl = np.array([jac[2, 1] - jac[1, 2], jac[0, 2] - jac[2, 0], jac[1, 0] - jac[0, 1]])
    return 2 * mu * (jac @ nu) + lam * np.trace(jac) * nu + mu * np.cross(nu, curl)


def traction(lam, mu, field, x, nu, jacobian=None, step=None):
    """Traction of ``field`` at ``x`` for the normal ``nu``.

    ``field`` is a callable ``u(x) -> 3-vector`` or a :class:`VectorGridField`.
    An exact ``jacobian`` callable takes precedence; otherwise central
    differences are used with ``step`` (default ``h/4`` for grid fields).
    """
    from .oracle import finite_difference_gradient

    x = np.asarray(x, dtype=float)
    if jacobian is not None:
        return traction_from_jacobian(lam, mu, jacobian(x), nu)
    if isinstance(field, VectorGridField):
        g = field.grid
        step = g.h / 4 if step is None else step
        if np.any(x - 2 * step < g.lo) or np.any(x + 2 * step > g.hi):
            raise PreconditionError("difference stencil leaves the grid")
        interp = field.interpolator("values")
        fun = lambda p: interp(p[None])[0]  # noqa: E731
    else:
        fun = field
        step = 1e-4 if step is None else step
    return traction_from_jacobian(lam, mu, finite_difference_gradient(fun, x, step), nu)


# --------------------------------------------------------------------------- incident fields

@dataclass(frozen=True)
class ElasticPlaneWave:
    k_p: float
    k_s: float
    d: tuple
    q: tuple
    p_weight: float = 1.0
    s_weight: float = 1.0

    def evaluate(self, x):
        x = np.atleast_2d(x)
        d, q = np.asarray(self.d), np.asarray(self.q)
        ph = x @ d
        return (self.p_weight * np.exp(1j * self.k_p * ph)[:, None] * d
                + self.s_weight * np.exp(1j * self.k_s * ph)[:, None] * q)

    def jacobian(self, x):
        x = np.atleast_2d(x)
        d, q = np.asarray(self.d), np.asarray(self.q)
        ph = x @ d
        jp = 1j * self.k_p * self.p_weight * np.exp(1j * self.k_p * ph)[:, None, None] * np.outer(d, d)
        js = 1j * self.k_s * self.s_weight * np.exp(1j * self.k_s * ph)[:, None, None] * np.outer(q, d)
        return jp + js


@dataclass(frozen=True)
class ElasticPointSource:
    medium: ElasticMedium
    source: tuple
    polarization: tuple

    def evaluate(self, x):
        return navier_tensor(self.medium, np.atleast_2d(x), np.asarray(self.source)) @ np.asarray(self.polarization)

    def jacobian(self, x):
        x = np.atleast_2d(x)
        a = np.broadcast_to(np.asarray(self.polarization, dtype=complex), x.shape)
        return grad_navier_apply(self.medium, x, np.asarray(self.source), a)


def elastic_plane_wave(medium, d, q, grid, p_weight=1.0, s_weight=1.0):
    """``p_weight d exp(ik_p x.d) + s_weight q exp(ik_s x.d)`` at the nodes."""
    d, q = _unit(d), _unit(q, "polarization")
    if abs(d @ q) > 1e-10:
        raise PreconditionError("shear polarization must be orthogonal to the direction")
    inc = ElasticPlaneWave(medium.k_p, medium.k_s, tuple(d), tuple(q), p_weight, s_weight)
    vals = inc.evaluate(grid.nodes().reshape(-1, 3)).reshape(grid.dims + (3,))
    return VectorGridField(grid, vals, incident=inc)


def elastic_point_source(medium, z, a, grid, near_radius=None, average=True):
    """Samples of ``Pi(x, z) a``; cells near ``z`` get cell averages."""
    z = np.asarray(z, dtype=float)
    a = _unit(a, "polarization")
    dist = signed_distance(medium.shape, z)
    if dist <= 0:
        raise PreconditionError(f"point source at {z.tolist()} is not exterior to the shape")
    inc = ElasticPointSource(medium, tuple(z), tuple(a))
    nodes = grid.nodes().reshape(-1, 3)
    vals = inc.evaluate(nodes)
    if average:
        radius = 5.0 * dist if near_radius is None else near_radius
        near = np.nonzero(np.linalg.norm(nodes - z, axis=-1) < radius)[0]
        near = near[np.asarray(implicit(medium.shape, nodes[near])) < 0.5 * np.sqrt(3) * grid.h]
        if len(near):
            vals[near] = cell_averages_near(inc.evaluate, nodes[near], grid.h, z)
    return VectorGridField(grid, vals.reshape(grid.dims + (3,)), incident=inc)


# --------------------------------------------------------------------------- discrete operator

@functools.lru_cache(maxsize=1)
def _navier_convolution(medium_key, grid, workers):
    lam, mu, omega = medium_key
    med = ElasticMedium(lam, mu, omega, ShapeSpec.ball(1.0))
    off = offset_vectors(grid).reshape(-1, 3)
    off[0] = (1.0, 0.0, 0.0)  # self cell, overwritten below
    shape = tuple(2 * n for n in grid.dims)
    tables = {pair: np.empty(len(off), dtype=complex) for pair in _PAIRS}
    chunk = 1 << 17
    for s in range(0, len(off), chunk):
        pi = navier_tensor(med, off[s:s + chunk], np.zeros(3))
        for (i, j) in _PAIRS:
            tables[(i, j)][s:s + chunk] = grid.cell_volume * pi[:, i, j]
    consts = med.consts
    a = equal_volume_radius(grid.h)
    self_w = 2 * np.pi * a**2 * (consts.alpha + consts.beta / 3) * np.eye(3) + grid.cell_volume * regular_limit(med)
    for (i, j) in _PAIRS:
        tables[(i, j)][0] = self_w[i, j]
        tables[(i, j)] = tables[(i, j)].reshape(shape)
    return PaddedConvolution(grid, tables, workers)


class ElasticOperator:
    """Discrete ``V u = -omega^2 int (1 - rho) Pi u`` on one grid."""

    def __init__(self, medium, grid, workers=1):
        grid.check_covers(medium.shape)
        self.medium = medium
        self.grid = grid
        self.contrast = (np.zeros(grid.dims, dtype=complex) if medium.is_homogeneous
                         else cell_average(grid, medium.contrast, medium.shape))
        self.support = np.abs(self.contrast) > 0
        self.conv = _navier_convolution((float(medium.lam), float(medium.mu), float(medium.omega)),
                                        grid, workers)

    def apply(self, values):
        w2 = self.medium.omega**2
        hats = [self.conv.forward(self.contrast * values[..., b]) for b in range(3)]
        out = np.empty(values.shape, dtype=complex)
        for a in range(3):
            acc = 0
            for b in range(3):
                key = (a, b) if (a, b) in self.conv.hat else (b, a)
                acc = acc + self.conv.hat[key] * hats[b]
            out[..., a] = -w2 * self.conv.backward(acc)
        return out

    def system(self):
        sup = self.support
        n = int(sup.sum())
        buf = np.zeros(self.grid.dims + (3,), dtype=complex)

        def matvec(v):
            v = np.ravel(v).reshape(n, 3)
            buf[sup] = v
            return (v - self.apply(buf)[sup]).ravel()

        return LinearOperator((3 * n, 3 * n), matvec=matvec, dtype=complex)


def solve_total_field_elastic(medium, incident, tol=1e-8, restart=30, maxiter=500, workers=1, operator=None):
    """Solve ``(I - V) u = u_in``; see :func:`hsprobe.acoustic.solve_total_field`."""
    if not tol > 0:
        raise PreconditionError("tolerance must be positive")
    grid = incident.grid
    op = operator or ElasticOperator(medium, grid, workers)
    if not np.any(op.support):
        return VectorGridField(grid, incident.values.copy(), incident=incident.incident,
                               scattered=np.zeros(grid.dims + (3,), dtype=complex),
                               info={"residual": 0.0, "iterations": 0})
    b = incident.values[op.support].ravel()
    A = op.system()
    x, its = _gmres(A, b, tol, restart, maxiter)
    res = np.linalg.norm(A.matvec(x) - b) / np.linalg.norm(b)
    if not res <= tol:
        raise ConvergenceError(f"GMRES stopped at relative residual {res:.3e} > {tol:.1e} "
                               f"after {its} iterations", residual=res, iterations=its)
    u = np.zeros(grid.dims + (3,), dtype=complex)
    u[op.support] = x.reshape(-1, 3)
    scattered = op.apply(u)
    total = incident.values + scattered
    total[op.support] = x.reshape(-1, 3)
    return VectorGridField(grid, total, incident=incident.incident, scattered=scattered,
                           info={"residual": float(res), "iterations": its})


# --------------------------------------------------------------------------- far fields

@dataclass
class FarFieldVector:
    directions: np.ndarray
    weights: np.ndarray
    p_part: np.ndarray
    s_part: np.ndarray
    info: dict = field(default_factory=dict, repr=False)

    @property
    def values(self):
        return self.p_part + self.s_part

    @property
    def theta(self):
        return np.arccos(np.clip(self.directions[:, 2], -1, 1))

    @property
    def phi(self):
        return np.mod(np.arctan2(self.directions[:, 1], self.directions[:, 0]), 2 * np.pi)

    def relative_l2_error(self, reference):
        diff = np.sum(np.abs(self.values - reference.values) ** 2, axis=-1)
        ref = np.sum(np.abs(reference.values) ** 2, axis=-1)
        return float(np.sqrt(np.sum(self.weights * diff) / np.sum(self.weights * ref)))

    def to_csv(self, path):
        """One row per direction and part (``p``, ``s``); ``part`` is the flag column."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "phi", "re1", "re2", "re3", "im1", "im2", "im3", "part"])
            for flag, arr in (("p", self.p_part), ("s", self.s_part)):
                for th, ph, v in zip(self.theta, self.phi, arr):
                    w.writerow([repr(float(th)), repr(float(ph))] + [repr(float(c)) for c in v.real]
                               + [repr(float(c)) for c in v.imag] + [flag])


def elastic_far_field(medium, total, directions=None, chunk=32):
    """P (radial) and S (tangential) far-field parts of the scattered wave."""
    dirs, w = direction_set(directions)
    grid = total.grid
    op = _elastic_operator_for(medium, grid)
    p = np.zeros((len(dirs), 3), dtype=complex)
    s = np.zeros_like(p)
    sup = op.support
    if np.any(sup):
        y = grid.nodes()[sup]
        dens = -medium.omega**2 * (op.contrast[sup][:, None] * total.values[sup]) * grid.cell_volume
        cp = 1 / (4 * np.pi * (medium.lam + 2 * medium.mu))
        cs = 1 / (4 * np.pi * medium.mu)
        for st in range(0, len(dirs), chunk):
            dd = dirs[st:st + chunk]
            ph = dd @ y.T
            ip = np.exp(-1j * medium.k_p * ph) @ dens
            is_ = np.exp(-1j * medium.k_s * ph) @ dens
            rad_p = np.sum(dd * ip, axis=-1)
            rad_s = np.sum(dd * is_, axis=-1)
            p[st:st + chunk] = cp * rad_p[:, None] * dd
            s[st:st + chunk] = cs * (is_ - rad_s[:, None] * dd)
    return FarFieldVector(dirs, w, p, s)


@functools.lru_cache(maxsize=2)
def _cached_elastic_operator(medium, grid):
    return ElasticOperator(medium, grid)


def _elastic_operator_for(medium, grid):
    try:
        return _cached_elastic_operator(medium, grid)
    except TypeError:
        return ElasticOperator(medium, grid)


# --------------------------------------------------------------------------- off-grid evaluation

def _vector_field_at(total):
    if total.incident is not None and total.scattered is not None:
        inc = total.incident
        interp = total.interpolator("scattered")
        return lambda y: inc.evaluate(y) + interp(y)
    return total.interpolator("values")


def eval_scattered_elastic(medium, total, x, rtol=1e-6, max_depth=10, exterior=True):
    """``w(x) = -omega^2 int (1 - rho) Pi(x, y) u(y) dy``."""
    x = np.asarray(x, dtype=float)
    if exterior:
        _check_exterior(medium.shape, x)
    if medium.is_homogeneous:
        return np.zeros(3, dtype=complex)
    u = _vector_field_at(total)

    def f(y):
        return medium.contrast(y)[:, None] * np.einsum("mab,mb->ma", navier_tensor(medium, x, y), u(y))

    res = OctreeIntegrator([shape_constraint(medium.shape)], rtol=rtol, max_depth=max_depth,
                           singular_points=[x], near_factor=4.0 if exterior else 1.0).integrate(f)
    return -medium.omega**2 * np.asarray(res.value)


@dataclass
class JacobianResult:
    value: np.ndarray
    converged: bool
    evaluations: int

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.value, dtype=dtype)


def eval_grad_scattered_elastic(medium, total, x, rtol=1e-6, max_depth=10, exterior=True):
    """Jacobian ``J[a, c] = d w_a / d x_c`` of the scattered field."""
    x = np.asarray(x, dtype=float)
    if exterior:
        _check_exterior(medium.shape, x)
    if medium.is_homogeneous:
        return JacobianResult(np.zeros((3, 3), dtype=complex), True, 0)
    u = _vector_field_at(total)

    def f(y):
        return medium.contrast(y)[:, None, None] * grad_navier_apply(medium, x, y, u(y))

    res = OctreeIntegrator([shape_constraint(medium.shape)], rtol=rtol, max_depth=max_depth,
                           singular_points=[x], near_factor=4.0 if exterior else 1.0).integrate(f)
    return JacobianResult(-medium.omega**2 * np.asarray(res.value), res.converged, res.evaluations)


def elastic_mixed_reciprocity_residual(medium, y, a, d, q, grid, tol=1e-8, eps=1e-14, workers=1,
                                       p_factor=None, s_factor=None):
    """Normalized residual of the elastic mixed reciprocity identity.

    ``p_factor d.w_p(-d) + s_factor q.w_s(-d) = a.u_sc(y, d, q)`` where ``w`` is
    the far field of the point source ``Pi(., y) a``. With far fields defined
    by the kernels of :func:`elastic_far_field` the factors are
    ``4 pi (lam + 2 mu)`` and ``4 pi mu``.
    """
    a, d, q = _unit(a, "a"), _unit(d), _unit(q, "q")
    if abs(d @ q) > 1e-10:
        raise PreconditionError("q must be orthogonal to d")
    y = _check_exterior(medium.shape, y)
    if medium.is_homogeneous:
        return 0.0
    pf = 4 * np.pi * (medium.lam + 2 * medium.mu) if p_factor is None else p_factor
    sf = 4 * np.pi * medium.mu if s_factor is None else s_factor
    op = ElasticOperator(medium, grid, workers)
    ps = solve_total_field_elastic(medium, elastic_point_source(medium, y, a, grid), tol, operator=op)
    ff = elastic_far_field(medium, ps, (np.atleast_2d(-d), np.array([4 * np.pi])))
    lhs = pf * (d @ ff.p_part[0]) + sf * (q @ ff.s_part[0])
    pw = solve_total_field_elastic(medium, elastic_plane_wave(medium, d, q, grid), tol, operator=op)
    rhs = a @ eval_scattered_elastic(medium, pw, y)
    return float(abs(lhs - rhs) / max(abs(rhs), eps))


def transmission_jumps_elastic(medium, total, point, normal, s, rtol=1e-6, max_depth=10):
    """Relative jumps of ``u`` and the traction ``T u`` across the boundary at ``point``.

    One-sided traces are linear extrapolations from distances ``s`` and ``2 s``.
    """
    nu = _unit(normal, "normal")
    point = np.asarray(point, dtype=float)
    inc = total.incident

    def sample(x):
        u = inc.evaluate(x)[0] + eval_scattered_elastic(medium, total, x, rtol, max_depth, exterior=False)
        jac = inc.jacobian(x)[0] + eval_grad_scattered_elastic(medium, total, x, rtol, max_depth,
                                                               exterior=False).value
        return u, traction_from_jacobian(medium.lam, medium.mu, jac, nu)

    traces = []
    for side in (1.0, -1.0):
        near, far = sample(point + side * s * nu), sample(point + 2 * side * s * nu)
        traces.append((2 * near[0] - far[0], 2 * near[1] - far[1]))
    (u_out, t_out), (u_in, t_in) = traces

    def rel(a, b):
        return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b)))

    return {"u": rel(u_out, u_in), "traction": rel(t_out, t_in)}
