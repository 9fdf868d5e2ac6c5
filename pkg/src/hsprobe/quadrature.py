"""Adaptive octree cubature over implicitly described regions.

A region is the intersection of :class:`Constraint` objects, each a level
function that is negative inside, with a Lipschitz bound used to decide
whether a cell is fully inside, fully outside or cut. Interior cells use a
tensor Gauss rule. Cut cells integrate along Gauss lines whose end points are
clipped to the boundary (exactly for balls and half-spaces, by bisection
otherwise), so curved and flat boundaries are both
resolved to high order without a mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError

# integrand evaluations per call, bounds the memory of tensor-valued integrands
_CHUNK = 1 << 16
_OCT = np.array([[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)], dtype=float)


def gauss_legendre(order, a=-1.0, b=1.0):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def sphere_grid(n_theta=16, n_phi=32):
    """Gauss-Legendre in ``cos(theta)`` times uniform azimuth.

    Returns ``(directions, weights, theta, phi)``; the weights sum to ``4 pi``.
    """
    t, wt = gauss_legendre(n_theta)
    theta = np.arccos(t)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    st = np.sin(th)
    dirs = np.stack([st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=-1).reshape(-1, 3)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    w = np.repeat(wt * (2.0 * np.pi / n_phi), n_phi)
    return dirs, w, th.ravel(), ph.ravel()


@dataclass(frozen=True)
class Constraint:
    """Level function ``func(points) < 0`` inside, with ``|grad| <= lipschitz``.

    ``line_root(start, unit, start_inside)``, when given, returns the exact
    parameter ``t`` where ``start + t unit`` crosses the level set.
    """

    func: object
    lo: np.ndarray
    hi: np.ndarray
    lipschitz: float = 1.0
    line_root: object = None

    def __call__(self, x):
        return np.asarray(self.func(x), dtype=float)


def ball_constraint(center, radius):
    c = np.asarray(center, dtype=float)

    def root(start, unit, inside):
        b = np.sum((start - c) * unit, axis=-1)
        disc = np.sqrt(np.maximum(b**2 - np.sum((start - c) ** 2, axis=-1) + radius**2, 0.0))
        return np.where(inside, -b + disc, -b - disc)

    return Constraint(lambda x: np.linalg.norm(x - c, axis=-1) - radius, c - radius, c + radius,
                      line_root=root)


def halfspace_constraint(point, normal, lo, hi):
    """``(x - point) . normal < 0``; the box ``lo, hi`` only bounds the root cell."""
    p = np.asarray(point, dtype=float)
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    return Constraint(lambda x: (x - p) @ n, np.asarray(lo, float), np.asarray(hi, float),
                      line_root=lambda start, unit, inside: -((start - p) @ n) / (unit @ n))


def shape_constraint(shape):
    from .geometry import implicit

    lo, hi = shape.bounding_box()
    return Constraint(lambda x: implicit(shape, x), lo, hi, shape.lipschitz)


@dataclass
class QuadResult:
    value: complex
    cells: int
    evaluations: int
    depth: int
    converged: bool

    def __complex__(self):
        return complex(self.value)


class OctreeIntegrator:
    """Breadth-first adaptive cubature over a constrained box.

    ``singular_points`` force refinement of cells whose centre lies within
    ``near_factor`` cell diagonals of any of the points, until ``max_depth``.
    """

    def __init__(self, constraints, order=4, rtol=1e-5, max_depth=10, initial_depth=2,
                 near_factor=4.0, singular_points=(), bisection_steps=48):
        if not constraints:
            raise PreconditionError("at least one constraint is required")
        self.constraints = list(constraints)
        self.order = order
        self.rtol = rtol
        self.max_depth = max_depth
        self.initial_depth = initial_depth
        self.near_factor = near_factor
        self.singular = np.asarray(singular_points, dtype=float).reshape(-1, 3)
        self.bisection_steps = bisection_steps
        self.gx, self.gw = gauss_legendre(order)
        g = np.stack(np.meshgrid(self.gx, self.gx, self.gx, indexing="ij"), axis=-1).reshape(-1, 3)
        self.cube_nodes = g
        self.cube_weights = np.einsum("i,j,k->ijk", self.gw, self.gw, self.gw).ravel()
        self.face_nodes = np.stack(np.meshgrid(self.gx, self.gx, indexing="ij"), axis=-1).reshape(-1, 2)
        self.face_weights = np.outer(self.gw, self.gw).ravel()

    def root_box(self):
        lo = np.max([c.lo for c in self.constraints], axis=0)
        hi = np.min([c.hi for c in self.constraints], axis=0)
        return lo, hi

    def _classify(self, centers, half):
        """0 outside, 1 inside, 2 cut."""
        state = np.ones(len(centers), dtype=int)
        rad = half * np.sqrt(3.0)
        for con in self.constraints:
            v = con(centers)
            margin = con.lipschitz * rad
            state[v > margin] = 0
            cut = np.abs(v) <= margin
            state[cut & (state != 0)] = 2
        return state

    def _rule_full(self, centers, half):
        pts = centers[:, None, :] + half[:, None, None] * self.cube_nodes[None]
        w = self.cube_weights[None] * half[:, None] ** 3
        return pts.reshape(-1, 3), w.reshape(-1)

    def _bisect(self, con, start, unit, length, start_neg):
        """Root of ``con`` on ``start + t * unit``, ``t in [0, length]``."""
        if con.line_root is not None:
            return np.clip(con.line_root(start, unit, start_neg), 0.0, length)
        a = np.zeros(len(start))
        b = length.copy()
        for _ in range(self.bisection_steps):
            mid = 0.5 * (a + b)
            same = (con(start + mid[:, None] * unit) < 0) == start_neg
            a = np.where(same, mid, a)
            b = np.where(same, b, mid)
        return 0.5 * (a + b)

    def _line_intervals(self, base, unit, h):
        """Sub-interval of ``[-h, h]`` where every constraint is negative."""
        lo = -h.copy()
        hi = h.copy()
        for con in self.constraints:
            f0 = con(base - h[:, None] * unit)
            f1 = con(base + h[:, None] * unit)
            out = (f0 >= 0) & (f1 >= 0)
            hi[out] = lo[out]
            idx = np.nonzero((f0 < 0) != (f1 < 0))[0]
            if len(idx):
                neg0 = f0[idx] < 0
                root = self._bisect(con, base[idx] - h[idx, None] * unit[idx], unit[idx],
                                    2 * h[idx], neg0) - h[idx]
                lo[idx] = np.where(neg0, lo[idx], np.maximum(lo[idx], root))
                hi[idx] = np.where(neg0, np.minimum(hi[idx], root), hi[idx])
        return lo, np.maximum(hi, lo)

    def _breakpoints(self, starts, unit, h):
        """Crossings of every constraint on segments ``starts + t unit``, ``t in [0, 2h]``.

        ``starts`` has shape ``(m, p, 3)`` (``p`` parallel segments per cell);
        returns sorted offsets relative to the segment midpoint, padded with
        ``h`` where a constraint does not change sign.
        """
        m, p, _ = starts.shape
        st = starts.reshape(-1, 3)
        u = np.repeat(unit, p, axis=0)
        hl = np.repeat(h, p)
        out = []
        for con in self.constraints:
            f0 = con(st)
            f1 = con(st + 2 * hl[:, None] * u)
            br = np.repeat(h, p).copy()
            idx = np.nonzero((f0 < 0) != (f1 < 0))[0]
            if len(idx):
                br[idx] = self._bisect(con, st[idx], u[idx], 2 * hl[idx], f0[idx] < 0) - hl[idx]
            out.append(br.reshape(m, p))
        return np.sort(np.concatenate(out, axis=1), axis=1)

    def _segment_rule(self, breaks, h):
        """Composite Gauss nodes/weights on ``[-h, h]`` split at ``breaks``."""
        m = len(h)
        edges = np.concatenate([-h[:, None], breaks, h[:, None]], axis=1)
        ln = np.diff(edges, axis=1)
        md = 0.5 * (edges[:, 1:] + edges[:, :-1])
        x = (md[..., None] + 0.5 * ln[..., None] * self.gx).reshape(m, -1)
        w = (0.5 * ln[..., None] * self.gw).reshape(m, -1)
        return x, w

    def _rule_cut(self, centers, half):
        # Height axis a follows the dominant gradient of the tightest constraint.
        # Integration is nested c -> b -> a; the c and b ranges are split where
        # a constraint crosses a cell edge or the top/bottom face, so each
        # piece has a smooth integrand and the rule stays high order.
        m = len(centers)
        eps = 1e-3 * half
        best = np.full(m, np.inf)
        axis = np.zeros(m, dtype=int)
        for con in self.constraints:
            v = np.abs(con(centers)) / con.lipschitz
            grad = np.stack([
                con(centers + eps[:, None] * e) - con(centers - eps[:, None] * e)
                for e in np.eye(3)], axis=-1)
            ax = np.argmax(np.abs(grad), axis=-1)
            sel = v < best
            axis[sel] = ax[sel]
            best[sel] = v[sel]
        eye = np.eye(3)
        ea, eb, ec = eye[axis], eye[(axis + 1) % 3], eye[(axis + 2) % 3]
        h3 = half[:, None, None]
        # c level: four cell edges parallel to c
        corners = np.array([[sa, sb] for sa in (-1, 1) for sb in (-1, 1)], dtype=float)
        starts = (centers[:, None, :] + h3 * (corners[None, :, :1] * ea[:, None, :]
                  + corners[None, :, 1:] * eb[:, None, :]) - h3 * ec[:, None, :])
        cx, cw = self._segment_rule(self._breakpoints(starts, ec, half), half)
        nc = cx.shape[1]
        # b level: top and bottom face segments for every c node
        mc = m * nc
        cen_c = (centers[:, None, :] + cx[..., None] * ec[:, None, :]).reshape(-1, 3)
        ea_c, eb_c = np.repeat(ea, nc, axis=0), np.repeat(eb, nc, axis=0)
        half_c = np.repeat(half, nc)
        hc3 = half_c[:, None, None]
        sides = np.array([-1.0, 1.0])
        starts = cen_c[:, None, :] + hc3 * sides[None, :, None] * ea_c[:, None, :] - hc3 * eb_c[:, None, :]
        bx, bw = self._segment_rule(self._breakpoints(starts, eb_c, half_c), half_c)
        nb = bx.shape[1]
        base = (cen_c[:, None, :] + bx[..., None] * eb_c[:, None, :]).reshape(-1, 3)
        fw = (np.repeat(cw.reshape(-1), nb) * bw.reshape(-1))
        keep = fw > 0
        nl_per_cell = nc * nb
        owner = np.repeat(np.arange(m), nl_per_cell)[keep]
        base = base[keep]
        fw = fw[keep]
        unit = ea[owner]
        h_l = half[owner]
        lo, hi = self._line_intervals(base, unit, h_l)
        length = hi - lo
        keep = length > 0
        base, unit, fw, lo, length, owner = base[keep], unit[keep], fw[keep], lo[keep], length[keep], owner[keep]
        t = (lo + 0.5 * length)[:, None] + 0.5 * length[:, None] * self.gx[None]
        pts = base[:, None, :] + t[..., None] * unit[:, None, :]
        w = fw[:, None] * 0.5 * length[:, None] * self.gw[None]
        return pts.reshape(-1, 3), w.reshape(-1), np.repeat(owner, self.order)

    def _estimate(self, f, centers, half):
        """Per-cell integral estimates and number of integrand evaluations."""
        state = self._classify(centers, half)
        chunks = []
        sel = np.nonzero(state == 1)[0]
        if len(sel):
            pts, w = self._rule_full(centers[sel], half[sel])
            chunks.append((pts, w, np.repeat(sel, len(self.cube_weights))))
        sel = np.nonzero(state == 2)[0]
        if len(sel):
            pts, w, owner = self._rule_cut(centers[sel], half[sel])
            chunks.append((pts, w, sel[owner]))
        if not chunks:
            return None, state, 0
        pts = np.concatenate([c[0] for c in chunks])
        w = np.concatenate([c[1] for c in chunks])
        owner = np.concatenate([c[2] for c in chunks])
        if len(pts) == 0:
            return None, state, 0
        out, tail = None, ()
        for s in range(0, len(pts), _CHUNK):
            vals = np.asarray(f(pts[s:s + _CHUNK]))
            tail = vals.shape[1:]
            weighted = (w[s:s + _CHUNK].reshape((-1,) + (1,) * len(tail)) * vals).reshape(len(vals), -1)
            if out is None:
                out = np.zeros((len(centers), weighted.shape[1]),
                               dtype=np.result_type(weighted.dtype, float))
            own = owner[s:s + _CHUNK]
            for col in range(weighted.shape[1]):
                v = weighted[:, col]
                if np.iscomplexobj(v):
                    out[:, col] += (np.bincount(own, v.real, len(centers))
                                    + 1j * np.bincount(own, v.imag, len(centers)))
                else:
                    out[:, col] += np.bincount(own, v, len(centers))
        return out.reshape((len(centers),) + tail), state, len(pts)

    def integrate(self, f, scale=None):
        """Integrate ``f(points) -> values`` (trailing value dims allowed)."""
        lo, hi = self.root_box()
        if np.any(hi <= lo):
            return QuadResult(0.0, 0, 0, 0, True)
        side = np.max(hi - lo)
        n0 = 2 ** self.initial_depth
        half0 = side / (2 * n0)
        idx = (np.arange(n0) + 0.5) * (2 * half0)
        grid = np.stack(np.meshgrid(idx, idx, idx, indexing="ij"), axis=-1).reshape(-1, 3) + lo
        keep = np.all(grid - half0 < hi, axis=-1)
        centers = grid[keep]
        half = np.full(len(centers), half0)
        est, state, nevals = self._estimate(f, centers, half)
        if est is None:
            return QuadResult(0.0, len(centers), 0, 0, True)
        live = state != 0
        centers, half, est = centers[live], half[live], est[live]
        total = np.zeros(est.shape[1:], dtype=est.dtype)
        if scale is None:
            scale = max(np.max(np.abs(est.sum(axis=0))), 1e-300)
        vol_root = side ** 3
        ncells = len(centers)
        depth = 0
        converged = True
        for depth in range(1, self.max_depth + 1):
            if len(centers) == 0:
                break
            kids_c = (centers[:, None, :] + 0.5 * half[:, None, None] * _OCT[None]).reshape(-1, 3)
            kids_h = np.repeat(0.5 * half, 8)
            kest, kstate, ne = self._estimate(f, kids_c, kids_h)
            nevals += ne
            ncells += len(kids_c)
            if kest is None:
                kest = np.zeros((len(kids_c),) + est.shape[1:], dtype=est.dtype)
            kest = kest.astype(np.result_type(kest.dtype, est.dtype))
            summed = kest.reshape((len(centers), 8) + kest.shape[1:]).sum(axis=1)
            diff = np.abs(summed - est)
            if diff.ndim > 1:
                diff = diff.reshape(len(diff), -1).max(axis=1)
            vol = (2 * half) ** 3
            tol = self.rtol * scale * (vol / vol_root) ** (2.0 / 3.0)
            accept = diff <= tol
            if len(self.singular):
                dist = np.min(np.linalg.norm(centers[:, None, :] - self.singular[None], axis=-1), axis=1)
                accept &= dist >= self.near_factor * 2 * np.sqrt(3.0) * half
            total = total + summed[accept].sum(axis=0)
            refine = np.nonzero(~accept)[0]
            kid_idx = (refine[:, None] * 8 + np.arange(8)[None]).ravel()
            live = kstate[kid_idx] != 0
            kid_idx = kid_idx[live]
            centers, half, est = kids_c[kid_idx], kids_h[kid_idx], kest[kid_idx]
        if len(centers):
            converged = False
            total = total + est.sum(axis=0)
        value = total if total.ndim else total[()]
        return QuadResult(value, ncells, nevals, depth, converged)


def integrate_region(f, constraints, **kwargs):
    """Convenience wrapper returning a :class:`QuadResult`."""
    scale = kwargs.pop("scale", None)
    return OctreeIntegrator(constraints, **kwargs).integrate(f, scale=scale)
