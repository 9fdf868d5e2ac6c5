"""Singular-source boundary probe.

Point sources ``z_j = z* + normal / j`` march towards a candidate point.
For each source the scattering problem is solved and the normal derivative
of the scattered field is evaluated at the source itself. At a boundary
point of a medium with nonzero contrast this indicator grows like
``slope * ln(delta j + 1)``; elsewhere it stays bounded. The fitted slope
classifies the candidate and, divided by the leading coefficient per unit
contrast, recovers the modulus of the contrast at the point.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import acoustic as ac
from . import elastic as el
from .errors import ConfigurationError, ConvergenceError, NotApplicableError, PreconditionError
from .geometry import ProbePath, probe_path

PHYSICS = ("acoustic", "elastic")
DEFAULT_DELTA = 1.0
DEFAULT_THRESHOLD_FACTOR = 0.25
DEFAULT_REFERENCE_CONTRAST = 0.1
MIN_R_SQUARED = 0.8
MIN_PERSISTENCE = 0.75
SERIES_COLUMNS = ["j", "zx", "zy", "zz", "re_v", "im_v", "abs_v"]


def blowup_coefficient(physics, k=None, omega=None, lam=None, mu=None):
    """Growth rate of the indicator against ``ln j`` per unit boundary contrast.

    Acoustic: ``k^2 / (16 pi)``. Elastic: ``omega^2 pi alpha^2`` with the
    Kelvin constant ``alpha``; both follow from integrating the leading
    ``cos(angle) / r^3`` singularity of the indicator over a half-ball.
    """
    if physics == "acoustic":
        if k is None or not k > 0:
            raise ConfigurationError("acoustic coefficient needs a positive wavenumber k")
        return k**2 / (16 * np.pi)
    if physics == "elastic":
        if omega is None or lam is None or mu is None:
            raise ConfigurationError("elastic coefficient needs omega, lam and mu")
        alpha = el.kelvin_constants(lam, mu).alpha
        return omega**2 * np.pi * alpha**2
    raise ConfigurationError(f"unknown physics {physics!r}")


def resolvable_j_max(grid):
    """Largest ``j`` with ``1/j >= 2 h``."""
    return int(np.floor(1.0 / (2.0 * grid.h) + 1e-9))


@dataclass
class ProbeSeries:
    """Indicator values along one probe path.

    ``scattered_max`` holds the grid max-norm of the scattered part of each
    solve (the uniform-bound record) and ``failures`` maps each dropped ``j``
    to the reason its solve failed.
    """

    path: ProbePath
    physics: str
    indicator_values: np.ndarray
    metadata: dict = field(default_factory=dict)
    delta: float = DEFAULT_DELTA
    scattered_max: np.ndarray = None
    failures: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.physics not in PHYSICS:
            raise ConfigurationError(f"unknown physics {self.physics!r}")
        self.indicator_values = np.asarray(self.indicator_values, dtype=complex).ravel()
        if len(self.indicator_values) != len(self.path):
            raise PreconditionError("one indicator value is needed per probe point")
        if not np.all(np.isfinite(self.indicator_values)):
            raise PreconditionError("indicator values must be finite")
        if self.scattered_max is not None:
            self.scattered_max = np.asarray(self.scattered_max, dtype=float)

    @property
    def indices(self):
        return np.asarray(self.path.indices)

    @property
    def magnitudes(self):
        return np.abs(self.indicator_values)

    def uniform_bound_ratio(self):
        """``max / min`` of the scattered max-norms across the series."""
        if self.scattered_max is None or len(self.scattered_max) == 0:
            return float("nan")
        return float(np.max(self.scattered_max) / np.min(self.scattered_max))

    def is_eventually_increasing(self, start=4):
        keep = self.indices >= start
        return bool(np.all(np.diff(self.magnitudes[keep]) > 0))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_COLUMNS)
            for j, z, v in zip(self.path.indices, self.path.points, self.indicator_values):
                w.writerow([int(j)] + [repr(float(c)) for c in z]
                           + [repr(float(v.real)), repr(float(v.imag)), repr(float(abs(v)))])


@dataclass(frozen=True)
class BlowupFit:
    """Least-squares fit ``|v_j| ~ slope * ln(delta j + 1) + intercept``.

    ``persistence`` is the slope over the second half of the series divided
    by the slope over the first half; logarithmic growth keeps it near one
    while a bounded series flattens out.
    """

    slope: float
    intercept: float
    r_squared: float
    classification: str
    contrast_estimate: float
    persistence: float = 0.0
    threshold: float = 0.0
    delta: float = DEFAULT_DELTA
    physics: str = "acoustic"
    coefficient: float = float("nan")

    def __post_init__(self):
        if self.classification not in ("boundary", "exterior"):
            raise PreconditionError(f"unknown classification {self.classification!r}")
        if self.classification == "exterior" and self.contrast_estimate != 0:
            raise PreconditionError("exterior fits carry a zero contrast estimate")

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r_squared,
                "classification": self.classification, "contrast_estimate": self.contrast_estimate,
                "persistence": self.persistence, "threshold": self.threshold, "delta": self.delta,
                "physics": self.physics}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# --------------------------------------------------------------------------- running the probe

def _check_range(grid, j_range):
    j_min, j_max = int(j_range[0]), int(j_range[-1])
    cap = resolvable_j_max(grid)
    if j_max > cap:
        raise ConfigurationError(
            f"j_max={j_max} exceeds the resolvable cap {cap} (1/j must stay >= 2h with h={grid.h:.4g})")
    return j_min, j_max


def _run(physics, medium, anchor, j_range, grid, solve_one, constants, delta):
    j_min, j_max = _check_range(grid, j_range)
    path = probe_path(anchor, j_min, j_max, medium.shape)
    nu = anchor.normal
    keep, values, wmax, failures = [], [], [], {}
    for i, (j, z) in enumerate(zip(path.indices, path.points)):
        try:
            v, w = solve_one(z, nu)
        except ConvergenceError as exc:
            failures[int(j)] = str(exc)
            continue
        keep.append(i)
        values.append(v)
        wmax.append(w)
    sub = ProbePath(anchor, tuple(path.indices[i] for i in keep), path.points[keep])
    meta = dict(constants, j_cap=resolvable_j_max(grid), grid=grid.to_dict())
    return ProbeSeries(sub, physics, np.asarray(values, dtype=complex), meta, delta,
                       np.asarray(wmax, dtype=float), failures)


def run_probe_acoustic(medium, anchor, j_range, grid, tol=1e-8, rtol=1e-5, max_depth=10,
                       delta=DEFAULT_DELTA, workers=1):
    """Indicator ``v_j = grad w_j(z_j) . normal`` for ``j`` in ``j_range``.

    ``w_j`` is the scattered field of the point source at ``z_j``; sources
    whose solve fails to converge are dropped and listed in ``failures``.
    """
    op = ac.AcousticOperator(medium, grid, workers)

    def solve_one(z, nu):
        if medium.is_homogeneous:
            return 0j, 0.0
        u = ac.solve_total_field(medium, ac.point_source(medium.k, z, grid, medium.shape), tol,
                                 operator=op)
        g = ac.eval_grad_scattered(medium, u, z, rtol=rtol, max_depth=max_depth)
        return complex(g.value @ nu), float(np.max(np.abs(u.scattered)))

    return _run("acoustic", medium, anchor, j_range, grid, solve_one, {"k": medium.k}, delta)


def run_probe_elastic(medium, anchor, j_range, grid, tol=1e-8, rtol=1e-5, max_depth=10,
                      delta=DEFAULT_DELTA, workers=1):
    """Indicator ``normal . grad(w_j . normal)(z_j)`` with source polarization ``normal``."""
    op = el.ElasticOperator(medium, grid, workers)

    def solve_one(z, nu):
        if medium.is_homogeneous:
            return 0j, 0.0
        inc = el.elastic_point_source(medium, z, nu, grid)
        u = el.solve_total_field_elastic(medium, inc, tol, operator=op)
        jac = el.eval_grad_scattered_elastic(medium, u, z, rtol=rtol, max_depth=max_depth)
        return complex(nu @ jac.value @ nu), float(np.max(np.abs(u.scattered)))

    consts = {"omega": medium.omega, "lam": medium.lam, "mu": medium.mu}
    return _run("elastic", medium, anchor, j_range, grid, solve_one, consts, delta)


# --------------------------------------------------------------------------- fitting and recovery

def _line_fit(x, y):
    A = np.stack([x, np.ones_like(x)], axis=-1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(slope), float(intercept)


def fit_log_blowup(series, delta=None, threshold=None, threshold_factor=DEFAULT_THRESHOLD_FACTOR,
                   reference_contrast=DEFAULT_REFERENCE_CONTRAST, min_r_squared=MIN_R_SQUARED,
                   min_persistence=MIN_PERSISTENCE):
    """Fit ``|v_j|`` against ``ln(delta j + 1)`` and classify the anchor.

    The anchor is a boundary point when the slope exceeds ``threshold``
    (default ``threshold_factor`` times the growth expected for a contrast
    of ``reference_contrast``), the fit has ``r^2 >= min_r_squared`` and the
    growth persists over the second half of the series.
    """
    delta = series.delta if delta is None else float(delta)
    if not delta > 0:
        raise PreconditionError("delta must be positive")
    if len(series.path) < 4:
        raise PreconditionError("a blow-up fit needs at least four points")
    coef = _coefficient_for(series.physics, series.metadata)
    if threshold is None:
        threshold = threshold_factor * reference_contrast * coef
    x = np.log(delta * series.indices + 1.0)
    y = series.magnitudes
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst <= 1e-30 * max(1.0, float(np.sum(y**2))):
        return BlowupFit(0.0, float(y.mean()), 0.0, "exterior", 0.0, 0.0, threshold, delta,
                         series.physics, coef)
    slope, intercept = _line_fit(x, y)
    r2 = max(0.0, 1.0 - float(np.sum((slope * x + intercept - y) ** 2)) / sst)
    half = (len(x) + 1) // 2
    early, _ = _line_fit(x[:half], y[:half])
    late, _ = _line_fit(x[-half:], y[-half:])
    persistence = late / early if early > 0 else 0.0
    boundary = slope > threshold and r2 >= min_r_squared and persistence >= min_persistence
    est = slope / coef if boundary else 0.0
    return BlowupFit(slope, intercept, r2, "boundary" if boundary else "exterior", est,
                     persistence, threshold, delta, series.physics, coef)


def _coefficient_for(physics, meta):
    keys = ("k",) if physics == "acoustic" else ("omega", "lam", "mu")
    return blowup_coefficient(physics, **{key: meta.get(key) for key in keys})


def recover_boundary_value(fit, physics=None, **constants):
    """``|1 - n(z*)|`` or ``|1 - rho(z*)|`` from a fitted slope.

    ``fit`` is a :class:`BlowupFit` (its own coefficient is used unless
    ``constants`` are given) or a bare slope, which then needs ``physics``
    and the matching constants.
    """
    if isinstance(fit, BlowupFit):
        if fit.classification != "boundary":
            raise NotApplicableError("recovery needs an anchor classified as boundary")
        slope = fit.slope
        physics = physics or fit.physics
        coef = blowup_coefficient(physics, **constants) if constants else fit.coefficient
    else:
        slope = float(fit)
        if physics is None:
            raise ConfigurationError("physics must be given with a bare slope")
        coef = blowup_coefficient(physics, **constants)
    return max(slope, 0.0) / coef


def scan_boundary(medium, anchors, j_range, grid, threads=1, fit_options=None, **probe_options):
    """Probe every candidate anchor; returns ``[(anchor, BlowupFit), ...]``."""
    anchors = list(anchors)
    if not anchors:
        return []
    runner = run_probe_elastic if isinstance(medium, el.ElasticMedium) else run_probe_acoustic
    fit_options = fit_options or {}

    def one(anchor):
        series = runner(medium, anchor, j_range, grid, **probe_options)
        return anchor, fit_log_blowup(series, **fit_options)

    if threads <= 1:
        return [one(a) for a in anchors]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, anchors))
