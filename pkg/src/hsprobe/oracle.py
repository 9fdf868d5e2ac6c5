"""Independent reference computations used to validate the solvers.

Nothing here calls the grid solvers: the references are closed forms,
separable series or adaptive cubature of explicit integrands.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import OracleError, PreconditionError
from .quadrature import (Constraint, OctreeIntegrator, ball_constraint, halfspace_constraint,
                         shape_constraint)

EPS = 1e-14


@dataclass(frozen=True)
class OracleReport:
    name: str
    reference_value: complex
    test_value: complex
    abs_error: float
    rel_error: float
    budget: int

    @classmethod
    def compare(cls, name, reference, test, budget=0):
        ref = complex(reference)
        val = complex(test)
        err = abs(val - ref)
        return cls(name, ref, val, err, err / max(abs(ref), EPS), int(budget))

    def row(self):
        return [self.name, _fmt(self.reference_value), _fmt(self.test_value),
                repr(self.abs_error), repr(self.rel_error), self.budget]


def _fmt(z):
    z = complex(z)
    return repr(z.real) if z.imag == 0 else repr(z)


REPORT_COLUMNS = ["name", "ref", "test", "abs_err", "rel_err", "budget"]


def append_reports(path, reports, extra=None):
    """Append report rows to a CSV ledger (header written for new files).

    ``extra`` is an optional list of ``(column, values)`` appended per row.
    """
    extra = extra or []
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(REPORT_COLUMNS + [c for c, _ in extra])
        for i, rep in enumerate(reports):
            w.writerow(rep.row() + [vals[i] for _, vals in extra])


# --------------------------------------------------------------------------- singular integrals

def halfball_log_integral(delta, j):
    """Exact ``int 1/|z - y|^3 dy`` over a half-ball of radius ``delta``.

    The flat face passes through the centre and the source sits on the
    symmetry axis at height ``1/j`` above it, outside the half-ball.
    """
    if not delta > 0 or j < 1:
        raise PreconditionError("need delta > 0 and j >= 1")
    t = 1.0 / j
    return (2 * np.pi * np.log(delta * j + 1)
            - 4 * np.pi * delta / (np.sqrt(delta**2 + t**2 + 2 * delta * t) + np.sqrt(delta**2 + t**2)))


def halfball_region(center, normal, delta):
    """Constraints for ``{|y - center| < delta, (y - center).normal < 0}``."""
    c = np.asarray(center, dtype=float)
    return [ball_constraint(c, delta), halfspace_constraint(c, normal, c - delta, c + delta)]


def shape_ball_region(shape, center, delta):
    """Constraints for ``D`` intersected with the ball ``B_delta(center)``."""
    return [shape_constraint(shape), ball_constraint(center, delta)]


@dataclass
class QuadratureValue:
    value: complex
    converged: bool
    budget: int

    def __complex__(self):
        return complex(self.value)


def singular_quadrature(region, z, exponent, f=None, rtol=1e-5, max_depth=10, near_factor=1.0):
    """``int_region f(y) / |z - y|^exponent dy`` by adaptive octree cubature.

    ``region`` is a list of constraints (see :mod:`hsprobe.quadrature`) or a
    :class:`~hsprobe.geometry.ShapeSpec`. Cells near ``z`` are refined
    until they are small compared to their distance to ``z``; a halo of one
    cell diagonal already resolves the ``1/r^3`` kernel to about ``1e-7``.
    """
    if exponent not in (0, 1, 2, 3):
        raise PreconditionError("exponent must be 0, 1, 2 or 3")
    if not isinstance(region, (list, tuple)):
        region = [shape_constraint(region)]
    z = np.asarray(z, dtype=float)
    if all(float(c(z[None])[0]) < 0 for c in region):
        raise PreconditionError("the singular point lies inside the integration region")

    def integrand(y):
        r = np.linalg.norm(y - z, axis=-1)
        base = r ** (-exponent) if exponent else np.ones(len(y))
        return base if f is None else np.asarray(f(y)) * base

    res = OctreeIntegrator(list(region), rtol=rtol, max_depth=max_depth, near_factor=near_factor,
                           singular_points=[z] if exponent else ()).integrate(integrand)
    return QuadratureValue(res.value, res.converged, res.evaluations)


def i2_acoustic_oracle(medium, z_j, z_star, delta, nu, rtol=1e-6, max_depth=12):
    """``-k^2 int_{D cap B_delta(z*)} (1 - n)(grad_x Phi(z_j, y).nu) Phi(y, z_j) dy``."""
    from .acoustic import grad_phi, phi

    z_j = np.asarray(z_j, dtype=float)
    nu = np.asarray(nu, dtype=float)
    k = medium.k
    if medium.is_homogeneous:
        return 0j

    def f(y):
        return medium.contrast(y) * (grad_phi(k, z_j, y) @ nu) * phi(k, y, z_j)

    res = OctreeIntegrator(shape_ball_region(medium.shape, z_star, delta), rtol=rtol,
                           max_depth=max_depth, singular_points=[z_j]).integrate(f)
    return complex(-k**2 * res.value)


def i2_elastic_oracle(medium, z_j, z_star, delta, nu, form="indicator", rtol=1e-6, max_depth=12):
    """Leading singular part of the elastic indicator over ``D cap B_delta(z*)``.

    ``form="indicator"`` integrates the exact quantity the probe measures,
    ``nu . grad_x[(Pi(x, y) w_in(y)) . nu]`` at ``x = z_j`` with
    ``w_in = Pi(., z_j) nu``. ``form="kelvin"`` keeps only the Kelvin parts
    of both tensors and ``form="contract"`` uses the closed-form contraction
    ``grad_x(Pi0 b) . (Pi0 b)`` with ``b = nu`` dotted with ``nu``.
    All are multiplied by ``-omega^2 (1 - rho)``.
    """
    from . import elastic as el

    z_j = np.asarray(z_j, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if medium.is_homogeneous:
        return 0j
    consts = el.kelvin_constants(medium.lam, medium.mu)

    if form == "indicator":
        def f(y):
            b = np.einsum("mab,b->ma", el.navier_tensor(medium, y, z_j), nu)
            g = el.grad_navier_apply(medium, z_j, y, b)      # (m, a, c) = d_c (Pi b)_a
            return medium.contrast(y) * np.einsum("a,mac,c->m", nu, g, nu)
    elif form == "kelvin":
        def f(y):
            b = np.einsum("mab,b->ma", el.kelvin_tensor(consts, y, z_j), nu)
            g = el.grad_kelvin_apply(consts, z_j, y, b)
            return medium.contrast(y) * np.einsum("a,mac,c->m", nu, g, nu)
    elif form == "contract":
        def f(y):
            return medium.contrast(y) * (el.grad_kelvin_contract(consts, z_j, y, nu) @ nu)
    else:
        raise PreconditionError(f"unknown form {form!r}")

    res = OctreeIntegrator(shape_ball_region(medium.shape, z_star, delta), rtol=rtol,
                           max_depth=max_depth, singular_points=[z_j]).integrate(f)
    return complex(-medium.omega**2 * res.value)


# --------------------------------------------------------------------------- far-field references

def _spherical_h(l, x, derivative=False):
    return (special.spherical_jn(l, x, derivative=derivative)
            + 1j * special.spherical_yn(l, x, derivative=derivative))


def mie_coefficients(radius, n_inside, k, tol=1e-12, max_order=60):
    """Exterior coefficients ``a_l`` for a penetrable ball with equal densities."""
    if n_inside == 1:
        return np.zeros(1, dtype=complex)
    k1 = k * np.sqrt(complex(n_inside))
    x, x1 = k * radius, k1 * radius
    coeffs = []
    peak = 0.0
    for l in range(max_order + 1):
        j, jp = special.spherical_jn(l, x), special.spherical_jn(l, x, derivative=True)
        h, hp = _spherical_h(l, x), _spherical_h(l, x, derivative=True)
        j1, j1p = _sph_jn_complex(l, x1), _sph_jn_complex(l, x1, derivative=True)
        a = (k * jp * j1 - k1 * j * j1p) / (k1 * h * j1p - k * hp * j1)
        coeffs.append(a)
        term = (2 * l + 1) * abs(a)
        peak = max(peak, term)
        if l > 2 and term < tol * max(peak, 1.0):
            return np.asarray(coeffs)
    raise OracleError(f"Mie series not converged by order {max_order}")


def _sph_jn_complex(l, z, derivative=False):
    z = complex(z)
    if z.imag == 0:
        return special.spherical_jn(l, z.real, derivative=derivative)
    return special.spherical_jn(l, z, derivative=derivative)


def mie_far_field(radius, n_inside, k, directions=None, d=(0.0, 0.0, 1.0)):
    """Far field of a constant-index ball for the plane wave ``exp(ik x.d)``."""
    from .acoustic import FarFieldScalar, direction_set

    dirs, w = direction_set(directions)
    d = np.asarray(d, dtype=float)
    coeffs = mie_coefficients(radius, n_inside, k)
    cos = np.clip(dirs @ d, -1.0, 1.0)
    vals = np.zeros(len(dirs), dtype=complex)
    for l, a in enumerate(coeffs):
        vals += (2 * l + 1) * a * special.eval_legendre(l, cos)
    return FarFieldScalar(dirs, w, (-1j / k) * vals, info={"order": len(coeffs) - 1})


def born_far_field(radius, contrast, k, xhat, d):
    """First Born far field ``-k^2 c (sin qa - qa cos qa) / q^3`` of a ball."""
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    q = k * np.linalg.norm(xhat - np.asarray(d, dtype=float), axis=-1)
    qa = q * radius
    small = qa < 1e-3
    out = np.empty(len(q))
    out[small] = radius**3 * (1 / 3 - qa[small] ** 2 / 30 + qa[small] ** 4 / 840)
    qs = q[~small]
    out[~small] = (np.sin(qa[~small]) - qa[~small] * np.cos(qa[~small])) / qs**3
    val = -(k**2) * contrast * out
    return val[0] if len(val) == 1 else val


# --------------------------------------------------------------------------- finite differences

def finite_difference_gradient(f, x, step):
    """Central differences with one Richardson step; error ``O(step^4)``.

    For scalar ``f`` the result has shape ``(3,)``; for array-valued ``f`` the
    derivative axis is appended last, so ``J[..., c] = d f / d x_c``.
    """
    x = np.asarray(x, dtype=float)

    def central(s):
        cols = []
        for c in range(len(x)):
            e = np.zeros_like(x)
            e[c] = s
            cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * s))
        return np.stack(cols, axis=-1)

    return (4 * central(step / 2) - central(step)) / 3
