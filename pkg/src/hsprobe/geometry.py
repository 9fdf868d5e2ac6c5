"""Implicit scatterer shapes, normals and probe paths.

Shapes are represented by a smooth implicit function ``G`` with ``G < 0``
inside. :func:`signed_distance` turns it into the Euclidean signed distance
by projecting onto the zero level set, which is exact for balls and accurate
to round-off for the ellipsoid and peanut.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, GeometryError, PreconditionError

KINDS = ("ball", "ellipsoid", "peanut")

#: Precondition tolerance for :func:`normal_at` (length units).
NORMAL_TOL = 1e-8

#: Peanut blend width relative to the lobe radius.
PEANUT_SMOOTHING = 0.2


@dataclass(frozen=True)
class ShapeSpec:
    """Scatterer support ``D``.

    ``params`` holds ``(radius,)`` for a ball, ``(a, b, c)`` semi-axes for an
    ellipsoid and ``(radius, separation)`` for a peanut: two balls of the given
    radius centred at ``center +- separation/2 * e_z``, smoothly united.
    """

    kind: str
    center: tuple = (0.0, 0.0, 0.0)
    params: tuple = (1.0,)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown shape kind {self.kind!r}; expected one of {KINDS}")
        center = tuple(float(c) for c in np.asarray(self.center, dtype=float).ravel())
        if len(center) != 3 or not np.all(np.isfinite(center)):
            raise ConfigurationError(f"shape center must be a finite 3-vector, got {self.center!r}")
        params = tuple(float(p) for p in np.atleast_1d(np.asarray(self.params, dtype=float)))
        expected = {"ball": 1, "ellipsoid": 3, "peanut": 2}[self.kind]
        if len(params) != expected:
            raise ConfigurationError(
                f"{self.kind} takes {expected} parameter(s), got {len(params)}")
        if self.kind == "peanut":
            if params[0] <= 0 or params[1] < 0:
                raise ConfigurationError("peanut radius must be positive and separation non-negative")
        elif any(p <= 0 for p in params):
            raise ConfigurationError(f"{self.kind} radii must be strictly positive, got {params}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "params", params)

    @classmethod
    def ball(cls, radius, center=(0.0, 0.0, 0.0)):
        return cls("ball", center, (radius,))

    @classmethod
    def ellipsoid(cls, semi_axes, center=(0.0, 0.0, 0.0)):
        return cls("ellipsoid", center, tuple(semi_axes))

    @classmethod
    def peanut(cls, radius, separation, center=(0.0, 0.0, 0.0)):
        return cls("peanut", center, (radius, separation))

    def to_dict(self):
        return {"kind": self.kind, "center": list(self.center), "params": list(self.params)}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["kind"], tuple(data.get("center", (0.0, 0.0, 0.0))), tuple(data["params"]))
        except KeyError as exc:
            raise ConfigurationError(f"shape is missing field {exc.args[0]!r}") from None

    @property
    def c(self):
        return np.asarray(self.center)

    def bounding_box(self):
        """Axis-aligned box ``(lo, hi)`` enclosing the closed shape."""
        c = self.c
        if self.kind == "ball":
            r = np.full(3, self.params[0])
        elif self.kind == "ellipsoid":
            r = np.asarray(self.params)
        else:
            rad, sep = self.params
            # the smooth union lies at most s*ln(2) outside the two lobes
            r = np.array([rad, rad, rad + 0.5 * sep]) + PEANUT_SMOOTHING * rad * np.log(2.0)
        return c - r, c + r

    @property
    def diameter(self):
        lo, hi = self.bounding_box()
        return float(np.max(hi - lo))

    @property
    def lipschitz(self):
        """Upper bound of ``|grad implicit|``; used by cell classification."""
        return 1.0


def _as_points(x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def _peanut_parts(shape, p):
    rad, sep = shape.params
    s = PEANUT_SMOOTHING * rad
    off = np.array([0.0, 0.0, 0.5 * sep])
    c1, c2 = shape.c + off, shape.c - off
    r1 = np.linalg.norm(p - c1, axis=-1)
    r2 = np.linalg.norm(p - c2, axis=-1)
    d = np.stack([r1 - rad, r2 - rad], axis=-1)
    m = np.min(d, axis=-1)
    e = np.exp(-(d - m[:, None]) / s)
    tot = e.sum(axis=-1)
    value = m - s * np.log(tot)
    w = e / tot[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        n1 = (p - c1) / r1[:, None]
        n2 = (p - c2) / r2[:, None]
    return value, w, (n1, n2), (r1, r2), s


def _implicit(shape, p, order=0):
    """Implicit function (and optionally gradient / Hessian) at points ``p``."""
    c = shape.c
    if shape.kind == "ball":
        q = p - c
        r = np.linalg.norm(q, axis=-1)
        g = r - shape.params[0]
        if order == 0:
            return g
        with np.errstate(invalid="ignore", divide="ignore"):
            grad = q / r[:, None]
        if order == 1:
            return g, grad
        eye = np.eye(3)[None]
        hess = (eye - grad[:, :, None] * grad[:, None, :]) / r[:, None, None]
        return g, grad, hess
    if shape.kind == "ellipsoid":
        a = np.asarray(shape.params)
        q = (p - c) / a
        g = np.sum(q * q, axis=-1) - 1.0
        if order == 0:
            return g
        grad = 2.0 * q / a
        if order == 1:
            return g, grad
        hess = np.broadcast_to(np.diag(2.0 / a**2), (len(p), 3, 3))
        return g, grad, hess
    value, w, (n1, n2), (r1, r2), s = _peanut_parts(shape, p)
    if order == 0:
        return value
    grad = w[:, :1] * n1 + w[:, 1:] * n2
    if order == 1:
        return value, grad
    eye = np.eye(3)[None]
    h1 = (eye - n1[:, :, None] * n1[:, None, :]) / r1[:, None, None]
    h2 = (eye - n2[:, :, None] * n2[:, None, :]) / r2[:, None, None]
    hess = w[:, 0, None, None] * h1 + w[:, 1, None, None] * h2
    for i, n in enumerate((n1, n2)):
        diff = n - grad
        hess = hess - (w[:, i, None, None] / s) * n[:, :, None] * diff[:, None, :]
    return value, grad, hess


def implicit(shape, x):
    """Cheap sign-correct level function, negative inside.

    Its zero set is exactly the boundary and ``|grad| <= shape.lipschitz``
    near it, but away from the surface it is not a distance.
    """
    p, single = _as_points(x)
    if shape.kind == "ellipsoid":
        a = np.asarray(shape.params)
        q = (p - shape.c) / a
        val = (np.linalg.norm(q, axis=-1) - 1.0) * a.min()
    else:
        val = _implicit(shape, p)
    return float(val[0]) if single else val


def _project(shape, p, iters=60):
    """Closest points on the zero level set (Lagrange-Newton).

    Points where the level function has no gradient (centres of symmetry)
    are restarted from small offsets along each axis and the nearest of the
    three projections is kept.
    """
    _, g0 = _implicit(shape, p, 1)
    flat = np.sum(g0 * g0, axis=-1) < 1e-24
    if not np.any(flat):
        return _project_newton(shape, p, iters)
    out = np.empty_like(p)
    if np.any(~flat):
        out[~flat] = _project_newton(shape, p[~flat], iters)
    q = p[flat]
    eta = 1e-6 * shape.diameter
    cands = [_project_newton(shape, q + eta * e, iters) for e in np.eye(3)]
    dist = np.stack([np.linalg.norm(c - q, axis=-1) for c in cands], axis=-1)
    best = np.argmin(dist, axis=-1)
    out[flat] = np.stack(cands, axis=1)[np.arange(len(q)), best]
    return out


def _project_newton(shape, p, iters):
    x = p.copy()
    y = p.copy()
    for _ in range(8):
        g, grad = _implicit(shape, y, 1)
        y = y - (g / np.sum(grad * grad, axis=-1))[:, None] * grad
    g, grad = _implicit(shape, y, 1)
    t = np.sum((y - x) * grad, axis=-1) / np.sum(grad * grad, axis=-1)
    eye = np.eye(3)[None]
    for _ in range(iters):
        g, grad, hess = _implicit(shape, y, 2)
        res = np.concatenate([y - x - t[:, None] * grad, g[:, None]], axis=-1)
        jac = np.zeros((len(y), 4, 4))
        jac[:, :3, :3] = eye - t[:, None, None] * hess
        jac[:, :3, 3] = -grad
        jac[:, 3, :3] = grad
        step = np.linalg.solve(jac, -res[..., None])[..., 0]
        y = y + step[:, :3]
        t = t + step[:, 3]
        if np.max(np.abs(step[:, :3])) < 1e-15:
            break
    return y


def signed_distance(shape, x):
    """Euclidean signed distance to the boundary (negative inside)."""
    if not isinstance(shape, ShapeSpec):
        raise ConfigurationError(f"expected a ShapeSpec, got {type(shape).__name__}")
    p, single = _as_points(x)
    if shape.kind == "ball":
        d = np.linalg.norm(p - shape.c, axis=-1) - shape.params[0]
    else:
        y = _project(shape, p)
        sign = np.sign(_implicit(shape, p))
        d = sign * np.linalg.norm(p - y, axis=-1)
    return float(d[0]) if single else d


def inside(shape, x):
    """Boolean mask of points strictly inside ``D``."""
    return np.asarray(implicit(shape, x)) < 0


def normal_at(shape, x, tol=NORMAL_TOL):
    """Outward unit normal at a point on (within ``tol`` of) the boundary."""
    p, single = _as_points(x)
    d = np.atleast_1d(signed_distance(shape, p))
    if np.any(np.abs(d) > tol):
        raise PreconditionError(
            f"normal_at needs a boundary point; |signed distance| = {np.max(np.abs(d)):.3e} > {tol:g}")
    _, grad = _implicit(shape, p, 1)
    n = grad / np.linalg.norm(grad, axis=-1, keepdims=True)
    return n[0] if single else n


@dataclass(frozen=True)
class SurfacePoint:
    """Anchor point with a unit normal pointing into the exterior.

    Instances built by :func:`surface_point` lie on the boundary of ``shape``;
    scan candidates may be arbitrary points with a chosen direction.
    """

    position: np.ndarray
    normal: np.ndarray
    shape: ShapeSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        nrm = np.asarray(self.normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(nrm) - 1.0) > 1e-12:
            raise PreconditionError(f"normal must be a unit vector, |n| = {np.linalg.norm(nrm)!r}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "normal", nrm)

    def offset(self, distance):
        """Same normal, position moved ``distance`` along it."""
        return SurfacePoint(self.position + distance * self.normal, self.normal, self.shape)

    def to_dict(self):
        return {"position": self.position.tolist(), "normal": self.normal.tolist()}


def surface_point(shape, x):
    """Project ``x`` onto the boundary and attach the outward normal."""
    p, _ = _as_points(x)
    if shape.kind == "ball":
        y = shape.c + shape.params[0] * (p - shape.c) / np.linalg.norm(p - shape.c)
    else:
        y = _project(shape, p)
    pos = y[0]
    _, grad = _implicit(shape, y, 1)
    nrm = grad[0] / np.linalg.norm(grad[0])
    return SurfacePoint(pos, nrm, shape)


def boundary_point_along_ray(shape, direction, origin=None):
    """First boundary crossing of the ray ``origin + t * direction`` from inside."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    o = shape.c if origin is None else np.asarray(origin, dtype=float)
    if implicit(shape, o) >= 0:
        raise PreconditionError("ray origin must lie inside the shape")
    lo, hi = 0.0, 2.0 * shape.diameter
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if implicit(shape, o + mid * d) < 0:
            lo = mid
        else:
            hi = mid
    return surface_point(shape, o + 0.5 * (lo + hi) * d)


def fibonacci_directions(n):
    """``n`` nearly uniform unit vectors (golden-angle spiral)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (1.0 + 5**0.5) * i
    rho = np.sqrt(1.0 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


@dataclass(frozen=True)
class ProbePath:
    anchor: SurfacePoint
    indices: tuple
    points: np.ndarray

    def __len__(self):
        return len(self.indices)


def probe_path(anchor: SurfacePoint, j_min: int, j_max: int, shape: ShapeSpec | None = None) -> ProbePath:
    """Source points ``z_j = z* + normal / j`` for ``j = j_min..j_max``."""
    if not (isinstance(j_min, (int, np.integer)) and isinstance(j_max, (int, np.integer))):
        raise PreconditionError("j_min and j_max must be integers")
    if not 1 <= j_min <= j_max:
        raise PreconditionError(f"need 1 <= j_min <= j_max, got {j_min}, {j_max}")
    indices = tuple(range(int(j_min), int(j_max) + 1))
    pts = np.array([anchor.position + anchor.normal / j for j in indices])
    shape = shape if shape is not None else anchor.shape
    if shape is not None:
        g = implicit(shape, pts)
        bad = [j for j, v in zip(indices, np.atleast_1d(g)) if v <= 0]
        if bad:
            raise GeometryError(f"probe point z_j for j={bad[0]} lies inside the shape (offending j: {bad})")
    return ProbePath(anchor, indices, pts)


def candidate_anchors(shape: ShapeSpec, n: int, offset: float = 0.0) -> Sequence[SurfacePoint]:
    """Boundary points ray-cast from the centre, optionally pushed outward."""
    return [boundary_point_along_ray(shape, d).offset(offset) for d in fibonacci_directions(n)]
