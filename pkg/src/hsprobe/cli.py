"""Command-line experiment runner: ``forward``, ``probe`` and ``verify``.

Configs are JSON documents. Every run writes ``manifest.json`` into the
output directory before any result file and rewrites it when the run ends.
Exit codes: 0 success, 1 failed check or solver failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import acoustic as ac
from . import elastic as el
from . import oracle
from .errors import ConfigurationError, HsProbeError
from .geometry import ShapeSpec, SurfacePoint, boundary_point_along_ray, surface_point
from .grid import GridSpec
from .io import sha256, write_field
from .probe import fit_log_blowup, resolvable_j_max, run_probe_acoustic, run_probe_elastic

SUITES = ("kernels", "reciprocity", "lemma23", "lemma31", "all")


# --------------------------------------------------------------------------- config

def _field(cfg, dotted, cast=None, default=...):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is ...:
                raise ConfigurationError(f"config field '{dotted}' is missing")
            return default
        node = node[part]
    if cast is None:
        return node
    try:
        return cast(node)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"config field '{dotted}' is invalid: {exc}") from None


def _vec(x):
    v = np.asarray(x, dtype=float).ravel()
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got {x!r}")
    return v


@dataclass
class ExperimentConfig:
    physics: str
    medium: object
    grid: GridSpec
    n_theta: int
    n_phi: int
    solver: dict
    raw: dict

    @property
    def wavenumber(self):
        return self.medium.k if self.physics == "acoustic" else self.medium.omega


def _checked(name, build):
    try:
        return build()
    except ConfigurationError as exc:
        raise ConfigurationError(f"config field '{name}' is invalid: {exc}") from None


def load_config(data):
    """Validate a parsed JSON document and build the medium and grid."""
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    physics = _field(data, "physics", str)
    if physics not in ("acoustic", "elastic"):
        raise ConfigurationError(f"config field 'physics' must be acoustic or elastic, got {physics!r}")
    shape = _checked("medium.shape", lambda: ShapeSpec.from_dict(_field(data, "medium.shape", dict)))
    floor = _field(data, "medium.contrast_floor", float, 0.0)
    if physics == "acoustic":
        k = _field(data, "medium.k", float)
        index = _field(data, "medium.index", complex, 1.0)
        index = index.real if index.imag == 0 else index
        medium = _checked("medium", lambda: ac.AcousticMedium(k, shape, index, floor))
    else:
        lam = _field(data, "medium.lam", float)
        mu = _field(data, "medium.mu", float)
        omega = _field(data, "medium.omega", float)
        rho = _field(data, "medium.density", float, 1.0)
        medium = _checked("medium", lambda: el.ElasticMedium(lam, mu, omega, shape, rho, floor))
    grid = _checked("grid", lambda: GridSpec.from_dict(_field(data, "grid", dict)))
    _checked("grid", lambda: grid.check_covers(shape))
    solver = {
        "tol": _field(data, "solver.tol", float, 1e-8),
        "restart": _field(data, "solver.restart", int, 30),
        "maxiter": _field(data, "solver.maxiter", int, 500),
        "rtol": _field(data, "solver.rtol", float, 1e-5),
    }
    if not solver["tol"] > 0:
        raise ConfigurationError("config field 'solver.tol' must be positive")
    n_theta = _field(data, "directions.n_theta", int, 16)
    n_phi = _field(data, "directions.n_phi", int, 32)
    return ExperimentConfig(physics, medium, grid, n_theta, n_phi, solver, data)


def _read_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from None


# --------------------------------------------------------------------------- manifest

class RunManifest:
    """Status record written before results and finalized at the end."""

    def __init__(self, out, command, config_text):
        self.path = Path(out) / "manifest.json"
        self.data = {
            "command": command,
            "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
            "tool_version": __version__,
            "started": _now(),
            "finished": None,
            "status": "incomplete",
            "tasks": {},
            "outputs": {},
        }
        self.write()

    def task(self, name, status, **extra):
        self.data["tasks"][name] = dict(status=status, **extra)
        self.write()

    def add_output(self, path):
        path = Path(path)
        self.data["outputs"][path.name] = sha256(path)

    def finish(self, status):
        self.data["status"] = status
        self.data["finished"] = _now()
        self.write()

    def write(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True, default=str) + "\n")


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


# --------------------------------------------------------------------------- forward

def _incident(cfg):
    spec = cfg.raw.get("incident", {"type": "plane_wave"})
    kind = spec.get("type", "plane_wave")
    med, grid = cfg.medium, cfg.grid
    d = _field(cfg.raw, "incident.d", _vec, np.array([0.0, 0.0, 1.0]))
    if cfg.physics == "acoustic":
        if kind == "plane_wave":
            return _checked("incident.d", lambda: ac.plane_wave(med.k, d, grid))
        if kind == "point_source":
            z = _field(cfg.raw, "incident.z", _vec)
            return _checked("incident.z", lambda: ac.point_source(med.k, z, grid, med.shape))
    else:
        if kind == "plane_wave":
            q = _field(cfg.raw, "incident.q", _vec, np.array([1.0, 0.0, 0.0]))
            return _checked("incident", lambda: el.elastic_plane_wave(med, d, q, grid))
        if kind == "point_source":
            z = _field(cfg.raw, "incident.z", _vec)
            a = _field(cfg.raw, "incident.a", _vec, np.array([0.0, 0.0, 1.0]))
            return _checked("incident", lambda: el.elastic_point_source(med, z, a, grid))
    raise ConfigurationError(f"config field 'incident.type' is invalid: {kind!r}")


def cmd_forward(cfg, out, manifest, threads=1):
    inc = _incident(cfg)
    s = cfg.solver
    dirs = ac.direction_set(None, cfg.n_theta, cfg.n_phi)
    if cfg.physics == "acoustic":
        total = ac.solve_total_field(cfg.medium, inc, s["tol"], s["restart"], s["maxiter"], threads)
        ff = ac.far_field(cfg.medium, total, dirs)
    else:
        total = el.solve_total_field_elastic(cfg.medium, inc, s["tol"], s["restart"], s["maxiter"], threads)
        ff = el.elastic_far_field(cfg.medium, total, dirs)
    manifest.task("solve", "ok", residual=total.info["residual"], iterations=total.info["iterations"])
    ff_path = out / "farfield.csv"
    ff.to_csv(ff_path)
    manifest.add_output(ff_path)
    for p in write_field(out / "total", total, cfg.wavenumber):
        manifest.add_output(p)
    compare = cfg.raw.get("compare")
    if compare:
        _compare(cfg, ff, compare, out, manifest)
    return 0


def _compare(cfg, ff, kind, out, manifest):
    med = cfg.medium
    if cfg.physics != "acoustic" or med.shape.kind != "ball" or callable(med.index):
        raise ConfigurationError("config field 'compare' needs an acoustic constant-index ball")
    if cfg.raw.get("incident", {}).get("type", "plane_wave") != "plane_wave":
        raise ConfigurationError("config field 'compare' needs plane-wave incidence")
    d = _field(cfg.raw, "incident.d", _vec, np.array([0.0, 0.0, 1.0]))
    radius = med.shape.params[0]
    if kind == "mie":
        ref = oracle.mie_far_field(radius, med.index, med.k, (ff.directions, ff.weights), d).values
    elif kind == "born":
        ref = oracle.born_far_field(radius, 1 - med.index, med.k, ff.directions, d)
    else:
        raise ConfigurationError(f"config field 'compare' is invalid: {kind!r}")
    ref = np.asarray(ref)
    err = ff.relative_l2_error(ref)
    ref_norm = float(np.sqrt(np.sum(ff.weights * np.abs(ref) ** 2)))
    rep = oracle.OracleReport(f"far_field_vs_{kind}", ref_norm, ff.l2_norm(), err * ref_norm, err,
                              cfg.grid.size)
    path = out / "comparison.csv"
    path.unlink(missing_ok=True)
    oracle.append_reports(path, [rep])
    manifest.add_output(path)
    manifest.task("compare", "ok", rel_l2_error=err)
    print(f"relative L2 far-field error vs {kind}: {err:.3e}")


# --------------------------------------------------------------------------- probe

def _anchor(spec, shape, i):
    if "position" in spec:
        pos = _field(spec, "position", _vec)
        if "normal" in spec:
            return SurfacePoint(pos, _field(spec, "normal", _vec), shape)
        return surface_point(shape, pos)
    if "direction" in spec:
        sp = boundary_point_along_ray(shape, _field(spec, "direction", _vec))
        return sp.offset(float(spec.get("offset", 0.0)))
    raise ConfigurationError(f"config field 'probe.anchors[{i}]' needs 'position' or 'direction'")


def cmd_probe(cfg, out, manifest, threads=1):
    anchors_cfg = _field(cfg.raw, "probe.anchors", list, [])
    j_range = _field(cfg.raw, "probe.j_range", list, [2, 16])
    if len(j_range) != 2:
        raise ConfigurationError("config field 'probe.j_range' must be [j_min, j_max]")
    delta = _field(cfg.raw, "probe.delta", float, 1.0)
    cap = resolvable_j_max(cfg.grid)
    if int(j_range[1]) > cap:
        raise ConfigurationError(f"config field 'probe.j_range' exceeds the resolvable cap "
                                 f"j_max <= {cap} (1/j >= 2h)")
    anchors = [_checked(f"probe.anchors[{i}]", lambda s=s, i=i: _anchor(s, cfg.medium.shape, i))
               for i, s in enumerate(anchors_cfg)]
    runner = run_probe_acoustic if cfg.physics == "acoustic" else run_probe_elastic
    s = cfg.solver

    def one(anchor):
        series = runner(cfg.medium, anchor, (int(j_range[0]), int(j_range[1])), cfg.grid, tol=s["tol"],
                        rtol=s["rtol"], delta=delta)
        return series, fit_log_blowup(series)

    if threads > 1 and len(anchors) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, anchors))
    else:
        results = [one(a) for a in anchors]
    for i, (series, fit) in enumerate(results):
        csv_path, json_path = out / f"probe_{i:03d}.csv", out / f"fit_{i:03d}.json"
        series.to_csv(csv_path)
        fit.to_json(json_path)
        manifest.add_output(csv_path)
        manifest.add_output(json_path)
        manifest.task(f"anchor_{i:03d}", "partial" if series.failures else "ok",
                      classification=fit.classification, failures=series.failures,
                      uniform_bound_ratio=series.uniform_bound_ratio())
        print(f"anchor {i}: {fit.classification} slope={fit.slope:.5g} r2={fit.r_squared:.4f} "
              f"contrast={fit.contrast_estimate:.4g}")
    return 0


# --------------------------------------------------------------------------- verify

@dataclass
class Check:
    report: oracle.OracleReport
    tol: float
    passed: bool


def _rel(name, ref, test, tol, budget=0):
    rep = oracle.OracleReport.compare(name, ref, test, budget)
    return Check(rep, tol, rep.rel_error <= tol)


def _max_rel(name, ref, test, tol, budget=0):
    ref, test = np.asarray(ref), np.asarray(test)
    err = float(np.max(np.abs(test - ref)) / max(float(np.max(np.abs(ref))), oracle.EPS))
    i = int(np.argmax(np.abs(test - ref)))
    rep = oracle.OracleReport(name, complex(ref.flat[i]), complex(test.flat[i]),
                              float(np.max(np.abs(test - ref))), err, budget)
    return Check(rep, tol, err <= tol)


def suite_kernels(rng):
    checks = []
    checks.append(_rel("phi_k1_r1", (np.cos(1) + 1j * np.sin(1)) / (4 * np.pi),
                       ac.phi(1.0, np.zeros(3), np.array([1.0, 0, 0])), 1e-14))
    checks.append(_rel("phi_k2_r05", np.exp(1j) / (2 * np.pi),
                       ac.phi(2.0, np.zeros(3), np.array([0.5, 0, 0])), 1e-14))
    y = np.zeros(3)
    x = np.array([0.3, 0.0, 0.0])
    fd = oracle.finite_difference_gradient(lambda p: ac.phi(1.0, p, y), x, 1e-3)
    checks.append(_max_rel("grad_phi_vs_fd", fd, ac.grad_phi(1.0, x, y), 1e-8))
    for lam, mu in ((1.0, 1.0), (0.0, 2.0), (3.5, 0.7)):
        c = el.kelvin_constants(lam, mu)
        checks.append(_rel(f"alpha_plus_beta_lam{lam}_mu{mu}", 1 / (4 * np.pi * mu), c.alpha + c.beta, 1e-14))
    med = el.ElasticMedium(1.0, 1.0, 1.0, ShapeSpec.ball(0.8), 1.5)
    consts = med.consts
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    diff = [np.linalg.norm(el.navier_tensor(med, r * d, y) - el.kelvin_tensor(consts, r * d, y), 2)
            for r in (1e-4, 1e-1)]
    bound = 2 * diff[1] + 10
    rep = oracle.OracleReport("navier_minus_kelvin_bounded", bound, diff[0], max(diff[0] - bound, 0.0),
                              diff[0] / bound, 0)
    checks.append(Check(rep, 1.0, diff[0] <= bound))
    pi = el.navier_tensor(med, 0.37 * d, y)
    checks.append(_max_rel("navier_symmetric", pi, pi.T, 1e-13))
    return checks


def suite_kelvin_gradients(rng, count=100):
    checks = []
    lam, mu = 1.0, 1.0
    consts = el.kelvin_constants(lam, mu)
    worst_fd, worst_alg = None, None
    for i in range(count):
        y = rng.uniform(-1, 1, 3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        x = y + rng.uniform(0.1, 2.0) * d
        b = rng.normal(size=3)
        fd = oracle.finite_difference_gradient(lambda p: el.kelvin_tensor(consts, p, y) @ b, x, 1e-3)
        c = _max_rel(f"grad_kelvin_apply_vs_fd_{i:03d}", fd, el.grad_kelvin_apply(consts, x, y, b), 1e-6)
        worst_fd = c if worst_fd is None or c.report.rel_error > worst_fd.report.rel_error else worst_fd
        comp = el.grad_kelvin_apply(consts, x, y, b) @ (el.kelvin_tensor(consts, x, y) @ b)
        c = _max_rel(f"grad_kelvin_contract_{i:03d}", comp, el.grad_kelvin_contract(consts, x, y, b), 1e-12)
        worst_alg = c if worst_alg is None or c.report.rel_error > worst_alg.report.rel_error else worst_alg
    checks += [worst_fd, worst_alg]
    y = np.zeros(3)
    x = np.array([0.3, -0.4, 0.5])
    r = np.linalg.norm(x)
    xb = x / r
    ref = -(consts.alpha + consts.beta) ** 2 * xb / r**3
    checks.append(_max_rel("contract_radial_b", ref, el.grad_kelvin_contract(consts, x, y, xb), 1e-12))
    return checks


def suite_halfball(rng):
    checks = []
    for delta in (0.3, 0.5):
        for j in (1, 10, 100):
            z = np.array([0.0, 0.0, 1.0 / j])
            region = oracle.halfball_region(np.zeros(3), np.array([0.0, 0.0, 1.0]), delta)
            q = oracle.singular_quadrature(region, z, 3)
            checks.append(_rel(f"halfball_delta{delta}_j{j}", oracle.halfball_log_integral(delta, j),
                               q.value, 1e-4, q.budget))
    return checks


def suite_reciprocity(rng, n=32):
    checks = []
    grid = GridSpec.cube(n)
    shape = ShapeSpec.ball(0.8)
    axes = np.vstack([np.eye(3), -np.eye(3)])
    for index, tol in ((1.01, 1e-3), (1.5, 2e-2)):
        med = ac.AcousticMedium(1.0, shape, index)
        op = ac.AcousticOperator(med, grid)
        table = np.empty((6, 6), dtype=complex)      # table[i, m] = u_inf(axes[i], axes[m])
        for m, dvec in enumerate(axes):
            u = ac.solve_total_field(med, ac.plane_wave(1.0, dvec, grid), operator=op)
            table[:, m] = ac.far_field(med, u, list(axes)).values
        swapped = np.empty_like(table)
        neg = [(i + 3) % 6 for i in range(6)]
        for i in range(6):
            for m in range(6):
                swapped[i, m] = table[neg[m], neg[i]]
        checks.append(_max_rel(f"far_field_reciprocity_n{index}", table, swapped, tol, grid.size))
    med = ac.AcousticMedium(1.0, shape, 1.5)
    res = ac.mixed_reciprocity_residual(med, (0.0, 0.0, 1.5), (0.0, 0.0, -1.0), grid)
    checks.append(Check(oracle.OracleReport("acoustic_mixed_reciprocity", 0j, res, res, res, grid.size),
                        2e-2, res <= 2e-2))
    emed = el.ElasticMedium(1.0, 1.0, 1.0, shape, 1.3)
    res = el.elastic_mixed_reciprocity_residual(emed, (0.0, 0.0, 1.5), (0.0, 0.0, 1.0),
                                                (0.0, 0.0, -1.0), (1.0, 0.0, 0.0), grid)
    checks.append(Check(oracle.OracleReport("elastic_mixed_reciprocity", 0j, res, res, res, grid.size),
                        5e-2, res <= 5e-2))
    return checks


_SUITE_FUNCS = {"kernels": suite_kernels, "lemma31": suite_kelvin_gradients, "lemma23": suite_halfball,
                "reciprocity": suite_reciprocity}


def cmd_verify(suite, out, manifest, seed=0):
    names = list(_SUITE_FUNCS) if suite == "all" else [suite]
    checks = []
    for name in names:
        got = _SUITE_FUNCS[name](np.random.default_rng(seed))
        manifest.task(name, "ok" if all(c.passed for c in got) else "failed")
        checks += got
    path = out / "verify.csv"
    path.unlink(missing_ok=True)
    oracle.append_reports(path, [c.report for c in checks],
                          extra=[("tol", [repr(c.tol) for c in checks]),
                                 ("pass", ["PASS" if c.passed else "FAIL" for c in checks])])
    manifest.add_output(path)
    for c in checks:
        flag = "PASS" if c.passed else "FAIL"
        print(f"{flag} {c.report.name} rel_err={c.report.rel_error:.3e} tol={c.tol:.1e}")
    return 0 if all(c.passed for c in checks) else 1


# --------------------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="hsprobe", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("forward", "probe"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON experiment config")
    v = sub.add_parser("verify")
    v.add_argument("suite", choices=SUITES)
    v.add_argument("--config", help="unused, accepted for symmetry")
    for s in sub.choices.values():
        s.add_argument("--out", default="hsprobe-out", help="output directory")
        s.add_argument("--threads", type=int, default=1, help="worker threads (1 = reproducible)")
        s.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    return p


def _fail(code, exc):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        return _fail(2, ConfigurationError("--threads must be at least 1"))
    out = Path(args.out)
    try:
        if args.command == "verify":
            text = json.dumps({"suite": args.suite, "seed": args.seed})
            cfg = None
        else:
            data = _read_config(args.config)
            cfg = load_config(data)
            text = json.dumps(data, sort_keys=True)
    except ConfigurationError as exc:
        return _fail(2, exc)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out, args.command, text)
    try:
        if args.command == "forward":
            code = cmd_forward(cfg, out, manifest, args.threads)
        elif args.command == "probe":
            code = cmd_probe(cfg, out, manifest, args.threads)
        else:
            code = cmd_verify(args.suite, out, manifest, args.seed)
    except ConfigurationError as exc:
        manifest.finish("error")
        return _fail(2, exc)
    except HsProbeError as exc:
        manifest.finish("error")
        return _fail(1, exc)
    manifest.finish("complete" if code == 0 else "failed")
    return code


if __name__ == "__main__":
    sys.exit(main())
