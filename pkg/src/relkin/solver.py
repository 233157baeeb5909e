"""Time evolution in perturbation form ``F = J + sqrt(J) f``.

* exponential Euler on the mild form (homogeneous and slab);
* the Picard iteration with loss rate ``B[F]`` and gain-only nonlinearity;
* the linearised Fourier-mode semigroup and its radial ``xi`` synthesis;
* the weighted-semigroup identities.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as dg
from .errors import ConfigError, UsageError
from .grid import INVARIANTS, DistributionField, SpatialGrid, test_function

MODES = ("homogeneous", "slab", "linear_mode", "picard")
COLLISIONS = ("full", "relax_only", "off")


@dataclass
class SolverConfig:
    """Time-stepping parameters.

    ``collisions`` selects the full operator, pure relaxation ``-nu f``
    (``K`` and ``Gamma`` switched off) or no collisions at all.  ``conserve``
    applies the moment correction after every nonlinear step.
    """

    dt: float = 0.05
    t_max: float = 10.0
    mode: str = "homogeneous"
    weight_l: float = 0.0
    picard_max_iter: int = 12
    picard_tol: float = 1e-12
    picard_tstar: float = 0.1
    cadence: int = 1
    xi_max: float = 48.0
    n_xi: int = 96
    fit_window: tuple = (10.0, 100.0)
    collisions: str = "full"
    conserve: bool = True
    entropy_L: float = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("solver.dt must be positive")
        if not self.t_max > 0:
            raise ConfigError("solver.tmax must be positive")
        if not self.dt < self.t_max:
            raise ConfigError("solver.dt must be smaller than solver.tmax")
        if self.mode not in MODES:
            raise ConfigError(f"solver.mode must be one of {MODES}")
        if not self.weight_l >= 0:
            raise ConfigError("solver.l must be non-negative")
        if int(self.picard_max_iter) != self.picard_max_iter or self.picard_max_iter < 1:
            raise ConfigError("solver.picard_max_iter must be a positive integer")
        if not self.picard_tol > 0:
            raise ConfigError("picard tolerance must be positive")
        if not self.picard_tstar > 0:
            raise ConfigError("solver.picard_tstar must be positive")
        if int(self.cadence) != self.cadence or self.cadence < 1:
            raise ConfigError("diagnostics cadence must be a positive integer")
        if not self.xi_max > 0:
            raise ConfigError("solver.xi_max must be positive")
        if int(self.n_xi) != self.n_xi or self.n_xi < 8:
            raise ConfigError("solver.n_xi must be an integer >= 8")
        w = tuple(self.fit_window)
        if len(w) != 2 or not 0 <= w[0] < w[1]:
            raise ConfigError("solver.fit_window must be two increasing times")
        self.fit_window = (float(w[0]), float(w[1]))
        if self.collisions not in COLLISIONS:
            raise ConfigError(f"collisions must be one of {COLLISIONS}")

    @property
    def n_steps(self):
        return int(round(self.t_max / self.dt))


class TimeSeries:
    """Ordered diagnostic records; ``t`` strictly increasing."""

    def __init__(self, columns=None):
        self.columns = list(columns) if columns else []
        self.rows = []
        self.meta = {}

    def append(self, t, **values):
        if self.rows and not t > self.rows[-1][0]:
            raise UsageError("time series records must have strictly increasing t")
        for k in values:
            if k not in self.columns:
                if self.rows:
                    raise UsageError(f"column {k!r} added after the first record")
                self.columns.append(k)
        self.rows.append([float(t)] + [float(values.get(k, np.nan)) for k in self.columns])

    def __len__(self):
        return len(self.rows)

    @property
    def times(self):
        return np.array([r[0] for r in self.rows])

    def column(self, name):
        i = self.columns.index(name) + 1
        return np.array([r[i] for r in self.rows])

    def last(self, name):
        return self.column(name)[-1]


def _vals(f, grid):
    if isinstance(f, DistributionField):
        return f.values
    return np.asarray(f)


# --------------------------------------------------------------- monitors
def positivity_monitor(f, grid=None, perturbation=True, tol=1e-12):
    """Minimum of ``F = J + sqrt(J) f`` (or of ``F`` itself) and a flag for negative values."""
    if isinstance(f, DistributionField):
        grid, v = f.grid, f.values
    else:
        v = np.asarray(f)
    F = grid.J + grid.sqrtJ * v if perturbation else v
    m = float(np.min(F))
    return m, m < -tol


def _record(series, t, grid, f, l, space=None, L=None):
    F = grid.J + grid.sqrtJ * f
    M0, J0, E0 = dg.excess_quantities(F, grid, space)
    ent = dg.entropy_functionals(np.maximum(F, 0.0), grid, space)
    wf = np.abs(f) * grid.p0**l if l else np.abs(f)
    rec = dict(norm_linf=float(wf.max()), M0=M0, J0x=J0[0], J0y=J0[1], J0z=J0[2], E0=E0,
               H=ent.H, excess_H=ent.excess_H, min_F=float(F.min()))
    if space is not None:
        rec["norm_l2x"] = dg.norm(f, "linf_p_l2x", l=l, grid=grid, space=space)
        if L is not None:
            inside = np.linalg.norm(grid.points, axis=1) <= L + 1e-12
            rec["sup_x_mass"] = float(np.max(np.abs(f) @ (grid.weights * inside)))
    series.append(t, **rec)


# ------------------------------------------------------------ homogeneous
def _moment_matrix(grid):
    return np.stack([test_function(grid, p) for p in INVARIANTS], axis=0)


def conserve_moments(F, target, grid, phi=None):
    """Multiplicative correction ``F (1 + phi . c)`` restoring the five moments ``target``."""
    phi = _moment_matrix(grid) if phi is None else phi
    wF = grid.weights * F
    A = (phi * wF) @ phi.T
    r = target - phi @ wF
    c = np.linalg.solve(A, r)
    return F * (1.0 + c @ phi)


def step_homogeneous(ws, f, dt, collisions="full", conserve=True):
    """One exponential-Euler step of the mild form.

    ``f+ = e^{-nu dt} f + (1 - e^{-nu dt}) / nu * [K f + Gamma(f, f)]`` with the
    bracket frozen at the start of the step.
    """
    grid = ws.grid
    v = _vals(f, grid)
    nu = ws.ensure_nu()
    if collisions == "off":
        out = v.copy()
    else:
        e = np.exp(-nu * dt)
        if collisions == "relax_only":
            out = e * v
        else:
            S = ws.collision_rhs(v)
            out = e * v + (-np.expm1(-nu * dt) / nu) * S
            if conserve:
                phi = _moment_matrix(grid)
                F0 = grid.J + grid.sqrtJ * v
                F1 = grid.J + grid.sqrtJ * out
                F1 = conserve_moments(F1, phi @ (grid.weights * F0), grid, phi)
                out = (F1 - grid.J) / grid.sqrtJ
    if isinstance(f, DistributionField):
        return DistributionField(grid, out, kind=f.kind)
    return out


def solve_homogeneous(ws, f0, cfg: SolverConfig, callback=None):
    """Exponential-Euler run to ``cfg.t_max`` with diagnostics every ``cfg.cadence`` steps."""
    grid = ws.grid
    f = np.array(_vals(f0, grid), dtype=float)
    series = TimeSeries()
    _record(series, 0.0, grid, f, cfg.weight_l)
    series.meta["aborted"] = False
    for k in range(1, cfg.n_steps + 1):
        f = step_homogeneous(ws, f, cfg.dt, cfg.collisions, cfg.conserve)
        if not np.all(np.isfinite(f)):
            series.meta["aborted"] = True
            series.meta["abort_time"] = k * cfg.dt
            break
        if k % cfg.cadence == 0 or k == cfg.n_steps:
            _record(series, k * cfg.dt, grid, f, cfg.weight_l)
        if callback is not None:
            callback(k * cfg.dt, f)
    series.meta["final"] = f
    return series


# ------------------------------------------------------------------- slab
def advect(f, grid, space, dt):
    """Periodic semi-Lagrangian shift ``x -> x - phat_x dt`` with linear interpolation.

    Rows are combined as ``a + theta (b - a)`` so x-constant data stay bitwise fixed.
    """
    phx = grid.points[:, 0] / grid.p0
    s = phx * dt / space.dx
    k = np.floor(s).astype(int)
    th = s - k
    j = np.arange(space.nx)[:, None]
    cols = np.arange(grid.size)[None, :]
    a = f[(j - k[None, :]) % space.nx, cols]
    b = f[(j - k[None, :] - 1) % space.nx, cols]
    return a + th[None, :] * (b - a)


def _collide_rows(ws, f, dt, collisions, conserve):
    # identical x-rows share one collision step
    uniq, inv = np.unique(f, axis=0, return_inverse=True)
    out = np.empty_like(uniq)
    for i in range(uniq.shape[0]):
        out[i] = step_homogeneous(ws, uniq[i], dt, collisions, conserve)
    return out[np.asarray(inv).ravel()]


def solve_slab(ws, f0, space: SpatialGrid, cfg: SolverConfig, L=None):
    """Lie splitting on the periodic slab: exact-characteristic advection, then collisions."""
    grid = ws.grid
    f = np.array(_vals(f0, grid), dtype=float)
    if f.shape != (space.nx, grid.size):
        raise UsageError(f"slab data must have shape ({space.nx}, {grid.size})")
    L = grid.pmax if L is None else L
    series = TimeSeries()
    _record(series, 0.0, grid, f, cfg.weight_l, space, L)
    series.meta["aborted"] = False
    for k in range(1, cfg.n_steps + 1):
        f = advect(f, grid, space, cfg.dt)
        if cfg.collisions != "off":
            f = _collide_rows(ws, f, cfg.dt, cfg.collisions, cfg.conserve)
        if not np.all(np.isfinite(f)):
            series.meta["aborted"] = True
            series.meta["abort_time"] = k * cfg.dt
            break
        if k % cfg.cadence == 0 or k == cfg.n_steps:
            _record(series, k * cfg.dt, grid, f, cfg.weight_l, space, L)
    series.meta["final"] = f
    return series


# ----------------------------------------------------------------- Picard
@dataclass
class PicardReport:
    times: np.ndarray
    iterates: list
    differences: np.ndarray
    ratios: np.ndarray
    ratio_estimate: float
    converged: bool
    diverged: bool
    notes: list = field(default_factory=list)


def picard_iterate(ws, f0, t_star, n_max, dt=None, l=0.0, tol=1e-12):
    """Successive approximations of the mild form with loss rate ``B[F^n]``.

    ``f^{n+1}(t) = e^{-int_0^t B^n} f0 + int_0^t e^{-int_s^t B^n} [K f^n + Gamma_gain(f^n, f^n)](s) ds``
    on the time lattice ``t_k = k dt`` (``int B`` by the trapezoid rule, the
    source frozen on each step).  ``f^0 = 0``.  Returns the iterates
    ``f^1 .. f^N`` (arrays of shape ``(n_t, N)``), the differences
    ``d_n = sup_{t,p} |w_l (f^{n+1} - f^n)|`` for ``n = 0 .. N-1`` and the
    ratios ``d_{n+1} / d_n``.  Three
    consecutive increases of ``d_n`` stop the iteration with ``diverged`` set.
    """
    grid = ws.grid
    v0 = np.array(_vals(f0, grid), dtype=float)
    if v0.ndim != 1:
        raise UsageError("the Picard iteration runs in homogeneous mode")
    if np.min(grid.J + grid.sqrtJ * v0) < -1e-12:
        raise UsageError("F0 = J + sqrt(J) f0 must be non-negative")
    dt = t_star / max(1, int(round(t_star / 0.05))) if dt is None else dt
    nt = int(round(t_star / dt))
    dt = t_star / nt
    times = dt * np.arange(nt + 1)
    nu = ws.ensure_nu()
    w = grid.p0**l
    prev = np.zeros((nt + 1, grid.size))
    iterates, diffs = [], []
    diverged = False
    for n in range(n_max):
        if n == 0:
            B = np.broadcast_to(nu, prev.shape)
            S = np.zeros_like(prev)
        else:
            B = np.empty_like(prev)
            S = np.empty_like(prev)
            for k in range(nt + 1):
                fk = prev[k]
                beta = ws._loss_nodes(grid.sqrtJ * fk)[:, 0]
                B[k] = ws.eval_loss_rate_B(grid.J + grid.sqrtJ * fk)
                if ws.form == "conservative":
                    S[k] = ws.collision_rhs(fk) + fk * beta
                else:
                    S[k] = ws.eval_K(fk) + ws.eval_Gamma(fk, gain_only=True)
        new = np.empty_like(prev)
        new[0] = v0
        for k in range(nt):
            dI = 0.5 * dt * (B[k] + B[k + 1])
            e = np.exp(-dI)
            new[k + 1] = e * new[k] + (-np.expm1(-dI)) * (dt / dI) * S[k]
        iterates.append(new)
        diffs.append(float(np.max(np.abs(w * (new - prev)))))
        if n > 0:
            if len(diffs) >= 4 and all(diffs[-i] > diffs[-i - 1] for i in (1, 2, 3)):
                diverged = True
                prev = new
                break
            if diffs[-1] <= tol:
                prev = new
                break
        prev = new
    d = np.array(diffs)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = d[1:] / d[:-1] if d.size > 1 else np.array([])
    est = float(np.exp(np.mean(np.log(ratios[-3:])))) if ratios.size else float("nan")
    conv = bool(d.size and d[-1] <= tol) or (not diverged and ratios.size > 0 and est < 1.0)
    rep = PicardReport(times, iterates, d, ratios, est, conv, diverged)
    if diverged:
        rep.notes.append("successive differences grew three times in a row")
    return rep


# ----------------------------------------------------------- Fourier modes
class ModeOperator:
    """Linearised collision operator restricted to functions even in ``(p_y, p_z)``.

    Transport ``i xi phat_x`` preserves the group of signed permutations of
    ``(p_y, p_z)``, so invariant data stay invariant and every mode lives on
    the orbit representatives.  ``K`` is the direct form with its null-space
    defect removed: with ``P`` the orthogonal projection onto the invariant
    collision invariants, ``nu - K_c = (I - P)(nu - K)(I - P)``.
    """

    def __init__(self, ws, l=0.0, project=True, zero_K=False):
        grid = ws.grid
        self.ws, self.grid, self.l = ws, grid, float(l)
        maps = grid.symmetry_maps
        keep = []
        px = grid.points[:, 0]
        for k in range(maps.shape[0]):
            if np.array_equal(px[maps[k]], px):
                keep.append(k)
        sub = maps[keep]
        rep_of = sub.min(axis=0)
        reps, inv, counts = np.unique(rep_of, return_inverse=True, return_counts=True)
        self.reps, self.inv, self.mult = reps, np.asarray(inv).ravel(), counts.astype(float)
        self.weights = grid.weights[reps] * self.mult
        nu = ws.ensure_nu()
        self.nu = nu[reps]
        self.phx = (grid.points[:, 0] / grid.p0)[reps]
        wl = grid.p0[reps] ** self.l
        m = reps.size
        if zero_K:
            K = np.zeros((m, m))
        else:
            rows = ws.assemble_K(reps)
            K = np.zeros((m, m))
            np.add.at(K.T, self.inv, rows.T)
            if project:
                Lop = np.diag(self.nu) - K
                basis = np.stack([grid.sqrtJ[reps] * test_function(grid, p)[reps] for p in ("1", "px", "p0")], 1)
                G = basis.T @ (self.weights[:, None] * basis)
                P = basis @ np.linalg.solve(G, basis.T * self.weights[None, :])
                IP = np.eye(m) - P
                K = np.diag(self.nu) - IP @ Lop @ IP
            K = (wl[:, None] * K) / wl[None, :]
        self.K = K
        self.wl = wl

    def restrict(self, g):
        g = np.asarray(g)
        return g[self.reps]

    def l2(self, G):
        """``L^2_p`` norms of the columns of ``G`` (shape ``(m,)`` or ``(m, k)``)."""
        return np.sqrt(np.einsum("i,i...->...", self.weights, np.abs(G) ** 2))

    def evolve(self, xi, g0, dt, n_steps, cadence=1, zero_nu=False):
        """Exponential Euler for all ``xi`` at once; returns times and norms of shape ``(n_rec, n_xi)``."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        G = np.array(g0, dtype=complex)
        if G.ndim == 1:
            G = np.repeat(G[:, None], xi.size, axis=1)
        nu = np.zeros_like(self.nu) if zero_nu else self.nu
        lam = 1j * self.phx[:, None] * xi[None, :] + nu[:, None]
        E = np.exp(-lam * dt)
        small = np.abs(lam) < 1e-300
        lam_safe = np.where(small, 1.0, lam)
        phi = np.where(small, dt, -np.expm1(-lam * dt) / lam_safe)
        times, norms = [0.0], [self.l2(G)]
        for k in range(1, n_steps + 1):
            G = E * G + phi * (self.K @ G)
            if k % cadence == 0 or k == n_steps:
                times.append(k * dt)
                norms.append(self.l2(G))
        self.state = G
        return np.array(times), np.array(norms)


def solve_linear_mode(ws, xi, g0, cfg: SolverConfig, op=None):
    """Single Fourier mode ``d_t g = -(i xi phat_x + nu) g + K_l g`` (exponential Euler)."""
    op = op if op is not None else ModeOperator(ws, cfg.weight_l)
    g = op.restrict(_vals(g0, ws.grid))
    t, nrm = op.evolve([xi], g, cfg.dt, cfg.n_steps, cfg.cadence)
    series = TimeSeries()
    for ti, v in zip(t, nrm[:, 0]):
        series.append(ti, norm_l2p=v)
    series.meta["final"] = op.state[:, 0]
    series.meta["operator"] = op
    return series


def semigroup_decay(ws, g0, xi_max, n_xi, cfg: SolverConfig, op=None, xi_profile=None):
    """Radially synthesised ``L^2_{x,p}`` norm of the linearised semigroup.

    ``ghat(0, xi, p) = a(xi) g0(p)`` with ``a = xi_profile`` (1 by default: an
    integrable, point-like spatial profile).  The norm is
    ``||g(t)||^2 = (4 pi / (2 pi)^3) int_0^xi_max |ghat(t, xi)|^2_{L^2_p} xi^2 dxi``
    by the trapezoid rule on ``n_xi`` uniform nodes.  A power law is fitted
    on ``cfg.fit_window``.
    """
    if int(n_xi) != n_xi or n_xi < 8:
        raise ConfigError("n_xi must be an integer >= 8")
    op = op if op is not None else ModeOperator(ws, cfg.weight_l)
    xi = np.linspace(0.0, xi_max, int(n_xi))
    amp = np.ones_like(xi) if xi_profile is None else np.asarray(xi_profile(xi), dtype=complex)
    g = op.restrict(_vals(g0, ws.grid))
    G0 = g[:, None] * amp[None, :]
    t, nrm = op.evolve(xi, G0, cfg.dt, cfg.n_steps, cfg.cadence)
    c = 4.0 * math.pi / (2.0 * math.pi) ** 3
    w = np.full(xi.size, xi[1] - xi[0])
    w[[0, -1]] *= 0.5
    total = np.sqrt(c * (nrm**2 * xi**2) @ w)
    series = TimeSeries()
    for ti, v in zip(t, total):
        series.append(ti, norm=v)
    try:
        fit = dg.fit_decay(series, "norm", cfg.fit_window, "power")
    except Exception as exc:  # reported, not raised
        fit = None
        series.meta["fit_error"] = str(exc)
    series.meta["fit"] = fit
    series.meta["xi"] = xi
    return series


# ------------------------------------------------------ weighted identities
def weighted_semigroup_check(ws, g0, l, cfg: SolverConfig, split=None, n_steps=None):
    """Largest relative gap in the two weight identities of the linear semigroup.

    (i) evolving ``w_l g0`` with the weighted operator ``w_l K w_-l`` against
    evolving ``g0`` with ``K`` and multiplying by ``w_l``; (ii) the same with
    the weight split as ``w_s * w_(l-s)``, ``s = min(a/2, l)`` by default.  Both sides
    apply the operator to identical lattice quantities, so the gaps are
    rounding-level.
    """
    grid = ws.grid
    g0 = np.array(_vals(g0, grid), dtype=float)
    n_steps = cfg.n_steps if n_steps is None else n_steps
    nu = ws.ensure_nu()
    e = np.exp(-nu * cfg.dt)
    ph = -np.expm1(-nu * cfg.dt) / nu
    split = min(ws.model.a / 2.0, l) if split is None else split

    def K_l(h, lw):
        return ws.weighted_wrap("K", lw, h) if lw else ws.eval_K(h)

    def run(h, lw):
        out = [h]
        for _ in range(n_steps):
            h = e * h + ph * K_l(h, lw)
            out.append(h)
        return out

    w = grid.p0**l
    a_path = run(w * g0, l)
    b_path = run(g0, 0.0)
    s_path = run(grid.p0 ** (l - split) * g0, l - split)
    gap1 = max(np.max(np.abs(x - w * y)) / max(np.max(np.abs(x)), 1e-300) for x, y in zip(a_path, b_path))
    ws_ = grid.p0**split
    gap2 = max(np.max(np.abs(x - ws_ * y)) / max(np.max(np.abs(x)), 1e-300) for x, y in zip(a_path, s_path))
    return float(gap1), float(gap2)
