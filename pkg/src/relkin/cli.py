"""Command line driver: ``relkin <scenario> --config <path> [--out <dir>] [--seed <int>]``.

Every scenario writes ``series.csv`` (abscissa first, then diagnostics in a
fixed order), ``report.csv`` (``check_id,status,measured,bound,ratio``) and
``manifest.json``.  Exit codes: 0 all checks pass, 1 a check failed or the
run crashed, 2 configuration error.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
import traceback
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import diagnostics as dg
from . import kinematics as km
from .cross_section import CrossSection, validate_params
from .errors import ConfigError, RelkinError
from .grid import SpatialGrid, build_angular_quadrature, build_momentum_grid, test_function
from .operators import OperatorWorkspace
from .solver import SolverConfig, TimeSeries, picard_iterate, semigroup_decay, solve_homogeneous, \
    solve_slab, step_homogeneous

SCENARIOS = ("validate", "nu-scaling", "relax", "slab", "picard", "linear-decay", "kernel-probe")


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _window(s):
    parts = [float(x) for x in s.replace(";", ",").split(",")]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated times")
    return tuple(parts)


# key -> (parser, default)
SCHEMA = {
    "sigma.a": (float, 1.0),
    "sigma.b": (float, 0.0),
    "sigma.gamma": (float, 0.0),
    "sigma.soft_enabled": (_bool, False),
    "sigma.chi_epsilon": (float, 0.1),
    "grid.pmax": (float, 12.0),
    "grid.n": (int, 25),
    "grid.ntheta": (int, 8),
    "grid.nphi": (int, 16),
    "grid.jacobi_mode": (_bool, False),
    "slab.X": (float, 10.0),
    "slab.nx": (int, 32),
    "op.refine_factor": (int, 2),
    "op.probe_halfwidth": (int, 1),
    "op.form": (str, "conservative"),
    "solver.dt": (float, 0.05),
    "solver.tmax": (float, 10.0),
    "solver.mode": (str, "homogeneous"),
    "solver.l": (float, 0.0),
    "solver.picard_tstar": (float, 0.1),
    "solver.picard_max_iter": (int, 12),
    "solver.xi_max": (float, 48.0),
    "solver.n_xi": (int, 96),
    "solver.fit_window": (_window, (10.0, 100.0)),
    "solver.cadence": (int, 1),
    "solver.collisions": (str, "full"),
    "solver.conserve": (_bool, True),
    "diag.d": (float, 1.05),
    "diag.seed": (int, 0),
    "diag.n_samples": (int, 100_000),
    "init.kind": (str, "default"),
    "init.amplitude": (float, 0.1),
    "init.shift": (float, 1.5),
    "init.x_width": (float, 1.0),
    "init.r": (float, 1.0),
}

INIT_KINDS = ("default", "zero", "bimodal", "perturbation", "projected")


@dataclass
class RunConfig:
    values: dict
    lines: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    scenario: str = None
    out_dir: str = "."
    seed: int = None

    def __getitem__(self, key):
        return self.values[key]

    def echo(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(self.values.items())}

    # builders -----------------------------------------------------------
    def model(self):
        v = self.values
        return CrossSection(v["sigma.a"], v["sigma.b"], v["sigma.gamma"], v["sigma.soft_enabled"],
                            v["sigma.chi_epsilon"])

    def grid(self):
        return build_momentum_grid(self.values["grid.pmax"], self.values["grid.n"])

    def quad(self):
        v = self.values
        return build_angular_quadrature(v["grid.ntheta"], v["grid.nphi"], v["sigma.gamma"], v["grid.jacobi_mode"])

    def space(self):
        return SpatialGrid(self.values["slab.X"], self.values["slab.nx"])

    def solver(self):
        v = self.values
        return SolverConfig(dt=v["solver.dt"], t_max=v["solver.tmax"], mode=v["solver.mode"],
                            weight_l=v["solver.l"], picard_max_iter=v["solver.picard_max_iter"],
                            picard_tstar=v["solver.picard_tstar"], cadence=v["solver.cadence"],
                            xi_max=v["solver.xi_max"], n_xi=v["solver.n_xi"],
                            fit_window=v["solver.fit_window"], collisions=v["solver.collisions"],
                            conserve=v["solver.conserve"])

    def workspace(self, form=None):
        return OperatorWorkspace(self.grid(), self.quad(), self.model(), form=form or self.values["op.form"])


_VIOLATION_KEY = {"γ > -2": "sigma.gamma", "a ≥ 0": "sigma.a", "a ≤ 2+γ": "sigma.a",
                  "b ≥ 0": "sigma.b", "b < min{4, 4+γ}": "sigma.b"}


def _line_for(cfg, message):
    for key in sorted(cfg.lines, key=len, reverse=True):
        tail = key.split(".", 1)[1]
        if key in message or (len(tail) > 2 and tail in message):
            return cfg.lines[key]
    return None


def _validate(cfg):
    v = cfg.values
    bad = validate_params(v["sigma.a"], v["sigma.b"], v["sigma.gamma"])
    if bad:
        key = _VIOLATION_KEY[bad[0]]
        raise ConfigError("inadmissible cross section: " + ", ".join(bad), cfg.lines.get(key))
    if v["op.form"] not in ("conservative", "direct"):
        raise ConfigError("op.form must be 'conservative' or 'direct'", cfg.lines.get("op.form"))
    if v["init.kind"] not in INIT_KINDS:
        raise ConfigError(f"init.kind must be one of {INIT_KINDS}", cfg.lines.get("init.kind"))
    if v["op.refine_factor"] < 2:
        raise ConfigError("op.refine_factor must be >= 2", cfg.lines.get("op.refine_factor"))
    if v["op.probe_halfwidth"] < 0:
        raise ConfigError("op.probe_halfwidth must be >= 0", cfg.lines.get("op.probe_halfwidth"))
    if not 1.0 <= v["init.r"] < 2.0:
        raise ConfigError("init.r must lie in [1, 2)", cfg.lines.get("init.r"))
    if v["diag.n_samples"] < 1:
        raise ConfigError("diag.n_samples must be positive", cfg.lines.get("diag.n_samples"))
    if not 1.0 < v["diag.d"] < 9.0 / 8.0:
        raise ConfigError("diag.d must lie in (1, 9/8)", cfg.lines.get("diag.d"))
    for build in (cfg.model, cfg.grid, cfg.quad, cfg.space, cfg.solver):
        try:
            build()
        except ConfigError as exc:
            if exc.line is None:
                raise ConfigError(str(exc), _line_for(cfg, str(exc))) from None
            raise


def parse_config(text):
    """Parse ``key = value`` lines (``#`` starts a comment) into a validated :class:`RunConfig`."""
    values = {k: d for k, (_, d) in SCHEMA.items()}
    cfg = RunConfig(values)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno)
        parser = SCHEMA[key][0]
        try:
            parsed = parser(val)
        except ValueError:
            raise ConfigError(f"{key}: cannot read {val!r} as {getattr(parser, '__name__', 'value')}",
                              lineno) from None
        if key in cfg.lines:
            msg = f"line {lineno}: {key} set again (previous value on line {cfg.lines[key]}); last value wins"
            cfg.warnings.append(msg)
            warnings.warn(msg, stacklevel=2)
        values[key] = parsed
        cfg.lines[key] = lineno
    _validate(cfg)
    return cfg


# ------------------------------------------------------------------ output
def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "{:.17g}".format(float(x))
    return str(x)


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


class Report:
    """Check rows ``(check_id, status, measured, bound, ratio)``.

    ``bound`` is a number for one-sided checks and ``lo:hi`` for bands, where
    ``ratio`` is the position inside the band (0 at ``lo``, 1 at ``hi``).
    Rows with status ``info`` are monitored quantities and never fail a run.
    """

    def __init__(self):
        self.rows = []
        self.notes = []

    def upper(self, cid, measured, bound):
        ok = bool(measured <= bound)
        self.rows.append((cid, "pass" if ok else "fail", float(measured), float(bound),
                          float(measured) / bound if bound else (0.0 if measured == 0 else math.inf)))

    def lower(self, cid, measured, bound):
        ok = bool(measured >= bound)
        self.rows.append((cid, "pass" if ok else "fail", float(measured), float(bound),
                          float(measured) / bound if bound else math.inf))

    def band(self, cid, measured, lo, hi):
        ok = bool(lo <= measured <= hi)
        self.rows.append((cid, "pass" if ok else "fail", float(measured), f"{_fmt(lo)}:{_fmt(hi)}",
                          (float(measured) - lo) / (hi - lo)))

    def flag(self, cid, ok, measured=float("nan")):
        self.rows.append((cid, "pass" if ok else "fail", float(measured), "", float("nan")))

    def info(self, cid, measured):
        self.rows.append((cid, "info", float(measured), "", float("nan")))

    def extend_audit(self, audit, prefix=""):
        for cid, status, m, b, r in audit.rows:
            self.rows.append((prefix + cid, status, m, b, r))

    @property
    def passed(self):
        return all(r[1] != "fail" for r in self.rows)

    def text(self):
        return _csv_text(["check_id", "status", "measured", "bound", "ratio"], self.rows)


def _series_text(series):
    if isinstance(series, TimeSeries):
        return _csv_text(["t"] + series.columns, series.rows)
    header, rows = series
    return _csv_text(header, rows)


# ------------------------------------------------------------- initial data
def _bimodal(grid, shift):
    P = grid.points

    def bump(c):
        return np.exp(-0.5 * np.sum((P - c) ** 2, axis=1)) / (2 * np.pi) ** 1.5

    F0 = 0.5 * (bump([shift, 0, 0]) + bump([-shift, 0, 0]))
    return (F0 - grid.J) / grid.sqrtJ


def _perturbation(grid, amplitude, l, project=False):
    P = grid.points
    shape = grid.sqrtJ * (1.0 + 0.5 * P[:, 0] / grid.p0 - 0.25 * (P[:, 1] ** 2 - P[:, 2] ** 2) / grid.p0**2)
    if project:
        basis = np.stack([grid.sqrtJ * test_function(grid, p) for p in ("1", "px", "py", "pz", "p0")], 1)
        G = basis.T @ (grid.weights[:, None] * basis)
        shape = shape - basis @ np.linalg.solve(G, basis.T @ (grid.weights * shape))
    wl = grid.p0**l
    return amplitude * shape / np.max(np.abs(wl * shape))


def initial_data(cfg, grid, default):
    kind = cfg["init.kind"]
    kind = default if kind == "default" else kind
    if kind == "zero":
        return np.zeros(grid.size)
    if kind == "bimodal":
        return _bimodal(grid, cfg["init.shift"])
    return _perturbation(grid, cfg["init.amplitude"], cfg["solver.l"], kind == "projected")


# ---------------------------------------------------------------- scenarios
def _scenario_validate(cfg, seed, rep):
    rng = np.random.default_rng(seed)
    n = 100_000
    p = (rng.random((n, 3)) * 2 - 1) * 20.0
    q = (rng.random((n, 3)) * 2 - 1) * 20.0
    om = rng.standard_normal((n, 3))
    om /= np.linalg.norm(om, axis=1, keepdims=True)
    out = km.post_collision(p, q, om)
    scale = km.energy(p) + km.energy(q)
    mom = np.max(np.linalg.norm(out.p_prime + out.q_prime - p - q, axis=1) / scale)
    en = np.max(np.abs(km.energy(out.p_prime) + km.energy(out.q_prime) - scale) / scale)
    rep.upper("collision_momentum_residual", mom, 1e-10)
    rep.upper("collision_energy_residual", en, 1e-10)
    rep.extend_audit(dg.inequality_suite(cfg.model(), cfg["diag.n_samples"], seed))
    ratio = dg.moller_ratio(p[:1000], q[:1000])
    rep.upper("moller_ratio_deviation_from_2", float(np.max(np.abs(ratio - 2.0))), 1e-9)
    m = cfg.model()
    ex = dg.exponents(m.a, m.b, m.gamma, 1.0, cfg["diag.d"])
    rep.upper("sigma_1_minus_0.75", abs(ex.sigma_r - 0.75), 1e-15)

    ws = cfg.workspace(form="direct")
    grid = ws.grid
    nu = ws.eval_nu()
    rep.lower("nu_min", float(nu.min()), 0.0)
    Q = ws.eval_Q(grid.J)
    integrand = float(np.max(nu * grid.J))
    rep.upper("Q_JJ_relative", float(np.max(np.abs(Q))) / integrand, 5e-3)
    rows = []
    for ph in ("1", "p0"):
        h = grid.sqrtJ * test_function(grid, ph)
        r = float(np.max(np.abs(nu * h - ws.eval_K(h))) / np.max(np.abs(nu * h)))
        rep.upper(f"null_space_{ph}", r, 3e-2)
        rows.append((ph, r))
    return ("invariant", "null_space_residual"), rows


def _scenario_nu_scaling(cfg, seed, rep):
    ws = cfg.workspace(form="direct")
    m = ws.model
    slope, p0, nu = dg.nu_slope(ws)
    rep.band("nu_loglog_slope", slope, m.a / 2 - 0.1, m.a / 2 + 0.1)
    nu0 = float(ws.eval_nu(np.zeros((1, 3)))[0])
    if m.a == 0 and m.gamma == 0 and not m.soft_enabled:
        exact = 32 * math.pi / math.e
        rep.upper("nu0_closed_form_relative", abs(nu0 - exact) / exact, 1e-2)
    rep.lower("nu0", nu0, 0.0)
    return ("p0", "nu"), list(zip(p0, nu))


def _scenario_relax(cfg, seed, rep):
    ws = cfg.workspace()
    sc = cfg.solver()
    f0 = initial_data(cfg, ws.grid, "bimodal")
    series = solve_homogeneous(ws, f0, sc)
    rep.flag("finite", not series.meta["aborted"])
    H = series.column("H")
    rep.upper("entropy_max_increase", float(np.max(np.diff(H), initial=0.0)), 1e-8)
    E0 = series.column("E0")
    tol = 1e-5 * (1 + abs(E0[0]))
    for c in ("M0", "J0x", "J0y", "J0z", "E0"):
        x = series.column(c)
        rep.upper(f"drift_{c}", float(np.max(np.abs(x - x[0]))), tol)
    rep.info("min_F", float(series.column("min_F").min()))
    return series


def _slab_initial(cfg, grid, space):
    f0 = _perturbation(grid, cfg["init.amplitude"], cfg["solver.l"])
    x = space.x
    prof = np.exp(-0.5 * ((x - 0.5 * space.X) / cfg["init.x_width"]) ** 2)
    return prof[:, None] * f0[None, :]


def _scenario_slab(cfg, seed, rep):
    ws = cfg.workspace()
    space = cfg.space()
    sc = cfg.solver()
    f0 = _slab_initial(cfg, ws.grid, space)
    series = solve_slab(ws, f0, space, sc)
    rep.flag("finite", not series.meta["aborted"])
    rep.info("min_F", float(series.column("min_F").min()))
    M = series.column("M0")
    if sc.collisions == "full" and sc.conserve or sc.collisions == "off":
        rep.upper("mass_drift", float(np.max(np.abs(M - M[0]))), 1e-8 * max(1.0, abs(M[0])))
    return series


def _scenario_picard(cfg, seed, rep):
    ws = cfg.workspace()
    sc = cfg.solver()
    f0 = initial_data(cfg, ws.grid, "perturbation")
    res = picard_iterate(ws, f0, sc.picard_tstar, sc.picard_max_iter, dt=min(sc.dt, sc.picard_tstar),
                         l=sc.weight_l)
    rep.flag("not_diverged", not res.diverged)
    tail = res.ratios[2:]
    rep.upper("max_ratio_from_n2", float(np.max(tail)) if tail.size else math.inf, 0.5)
    f = np.array(f0, dtype=float)
    dt = res.times[1] - res.times[0]
    for _ in range(len(res.times) - 1):
        f = step_homogeneous(ws, f, dt, sc.collisions, sc.conserve)
    fN = res.iterates[-1][-1]
    rep.upper("terminal_agreement", float(np.max(np.abs(fN - f)) / max(np.max(np.abs(f)), 1e-300)), 1e-3)
    rows = []
    for k, d in enumerate(res.differences):
        rows.append((k, d, res.ratios[k] if k < res.ratios.size else float("nan")))
    return ("n", "d_n", "ratio_next"), rows


def _scenario_linear_decay(cfg, seed, rep):
    ws = cfg.workspace(form="direct")
    sc = cfg.solver()
    r = cfg["init.r"]
    ex = dg.exponents(ws.model.a, ws.model.b, ws.model.gamma, r, cfg["diag.d"])
    s = 3.0 * (1.0 - 1.0 / r)

    def profile(xi):
        with np.errstate(divide="ignore"):
            return np.where(xi > 0, xi ** (-s), 0.0 if s > 0 else 1.0)

    if sc.t_max < sc.fit_window[1]:
        rep.notes.append(f"run extended from t = {sc.t_max:g} to the fit window end {sc.fit_window[1]:g}")
        sc = replace(sc, t_max=sc.fit_window[1])
    g0 = ws.grid.sqrtJ * ws.grid.p0**sc.weight_l
    series = semigroup_decay(ws, g0, sc.xi_max, sc.n_xi, sc, xi_profile=profile)
    fit = series.meta["fit"]
    if fit is None:
        rep.flag("fit_exponent", False)
        rep.notes.append(series.meta.get("fit_error", "fit failed"))
    else:
        rep.band("fit_exponent", fit.value, ex.sigma_r - 0.1, ex.sigma_r + 0.1)
        rep.lower("fit_r2", fit.r2, 0.99)
    return series


def _scenario_kernel_probe(cfg, seed, rep):
    ws = cfg.workspace(form="direct")
    slope, r2, dist, vals = dg.probe_decay(ws, half_width=cfg["op.probe_halfwidth"], direction=(1, 1, 1))
    rep.upper("probe_log_slope", slope, 0.0)
    rep.lower("probe_r2", r2, 0.9)
    return ("distance", "probe"), list(zip(dist, vals))


_RUNNERS = {
    "validate": _scenario_validate,
    "nu-scaling": _scenario_nu_scaling,
    "relax": _scenario_relax,
    "slab": _scenario_slab,
    "picard": _scenario_picard,
    "linear-decay": _scenario_linear_decay,
    "kernel-probe": _scenario_kernel_probe,
}


def _version():
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        return "unknown"


def run_scenario(cfg, scenario=None, out_dir=None, seed=None):
    """Run one scenario, write its outputs and return the exit code (0 or 1)."""
    scenario = scenario or cfg.scenario
    out_dir = out_dir or cfg.out_dir
    seed = cfg["diag.seed"] if seed is None else int(seed)
    if scenario not in _RUNNERS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    os.makedirs(out_dir, exist_ok=True)
    rep = Report()
    started = time.time()
    status = 1
    error = None
    try:
        series = _RUNNERS[scenario](cfg, seed, rep)
        _atomic_write(os.path.join(out_dir, "series.csv"), _series_text(series))
        status = 0 if rep.passed else 1
    except (RelkinError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        rep.flag("scenario_completed", False)
        status = 1
    finally:
        _atomic_write(os.path.join(out_dir, "report.csv"), rep.text())
        manifest = {
            "scenario": scenario,
            "seed": seed,
            "config": cfg.echo(),
            "config_warnings": cfg.warnings,
            "code_version": _version(),
            "started_unix": started,
            "wall_seconds": time.time() - started,
            "checks": [{"check_id": r[0], "status": r[1]} for r in rep.rows],
            "notes": rep.notes,
            "error": error,
            "exit_status": status,
        }
        _atomic_write(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=2) + "\n")
    return status


def main(argv=None):
    ap = argparse.ArgumentParser(prog="relkin", description=__doc__.splitlines()[0])
    ap.add_argument("scenario", help="one of: " + ", ".join(SCENARIOS))
    ap.add_argument("--config", required=True, help="flat key = value configuration file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="overrides diag.seed")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if args.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIOS)}")
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = parse_config(text)
        for w in cfg.warnings:
            print(f"warning: {w}", file=sys.stderr)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    code = run_scenario(cfg, args.scenario, args.out, args.seed)
    with open(os.path.join(args.out, "report.csv"), encoding="utf-8") as fh:
        failed = [ln.split(",")[0] for ln in fh.read().splitlines()[1:] if ",fail," in ln]
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
