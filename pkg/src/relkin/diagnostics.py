"""Norms, excess quantities, entropy, decay fits, exponent tables and inequality audits."""

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .cross_section import CrossSection, validate_params
from .errors import ConfigError, DomainError, FitError, UsageError
from .grid import DistributionField, moment
from .kinematics import energy, relative_quantities

NORM_KINDS = ("linf_p", "l2_p", "linf_p_l2x", "linf_p_linfx", "linf_xp", "l2p_lrx", "l2_xp")


# ---------------------------------------------------------------------- norms
def _geometry(f, grid=None, space=None):
    if isinstance(f, DistributionField):
        return f.values, f.grid, f.space
    if grid is None:
        raise UsageError("a raw array needs its grid")
    return np.asarray(f), grid, space


def norm(f, kind, r=None, l=0.0, grid=None, space=None):
    """Quadrature norms of a (possibly complex, possibly x-resolved) field.

    Homogeneous fields take ``linf_p`` or ``l2_p``; slab fields take
    ``linf_p_l2x``, ``linf_p_linfx`` (max over p of ``max(L2_x, Linf_x)``),
    ``linf_xp``, ``l2p_lrx`` (``L^2_p`` of ``L^r_x``) or ``l2_xp``.  ``l``
    applies the weight ``(p0)^l`` first.
    """
    vals, grid, space = _geometry(f, grid, space)
    if kind not in NORM_KINDS:
        raise UsageError(f"unknown norm kind {kind!r}")
    a = np.abs(vals)
    if l:
        a = a * grid.p0**l
    w = grid.weights
    if kind in ("linf_p", "l2_p"):
        if space is not None or a.ndim != 1:
            raise UsageError(f"{kind} is a homogeneous norm")
        return float(a.max()) if kind == "linf_p" else float(np.sqrt(np.sum(w * a * a)))
    if space is None or a.ndim != 2:
        raise UsageError(f"{kind} needs a field with a spatial axis")
    dx = space.dx
    if kind == "linf_xp":
        return float(a.max())
    if kind == "l2_xp":
        return float(np.sqrt(dx * np.sum(a * a * w)))
    l2x = np.sqrt(dx * np.sum(a * a, axis=0))
    if kind == "linf_p_l2x":
        return float(l2x.max())
    if kind == "linf_p_linfx":
        return float(np.maximum(l2x, a.max(axis=0)).max())
    if r is None or not r >= 1:
        raise UsageError("l2p_lrx needs r >= 1")
    lrx = (dx * np.sum(a**r, axis=0)) ** (1.0 / r)
    return float(np.sqrt(np.sum(w * lrx * lrx)))


# ------------------------------------------------------------ conserved sets
def excess_quantities(F, grid=None, space=None):
    """Moments of ``F - J`` against ``1, p, p0`` (densities in homogeneous mode)."""
    vals, grid, space = _geometry(F, grid, space)
    if np.iscomplexobj(vals):
        raise UsageError("excess quantities need a real F")
    d = vals - grid.J
    M0 = moment(d, "1", grid, space)
    J0 = np.array([moment(d, c, grid, space) for c in ("px", "py", "pz")])
    E0 = moment(d, "p0", grid, space)
    return float(M0), J0, float(E0)


class Entropy(NamedTuple):
    H: float
    excess_H: float
    lemma25_lhs: float


def _xlogx(x):
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def entropy_functionals(F, grid=None, space=None):
    """``int F ln F``, its excess over ``J`` and the quadratic/linear excess functional.

    Negative nodes are clamped to zero with a warning.
    """
    vals, grid, space = _geometry(F, grid, space)
    vals = np.asarray(vals, dtype=float)
    if np.any(vals < 0):
        warnings.warn(f"{int(np.sum(vals < 0))} negative nodes clamped to 0 in the entropy",
                      RuntimeWarning, stacklevel=2)
        vals = np.maximum(vals, 0.0)
    J = grid.J
    dx = 1.0 if space is None else space.dx

    def integrate(x):
        tot = x @ grid.weights
        return float(np.sum(tot) * dx) if np.ndim(tot) else float(tot)

    H = integrate(_xlogx(vals))
    excess = integrate(_xlogx(vals) - J * np.log(J))
    d = np.abs(vals - J)
    near = d <= J
    lhs = integrate(np.where(near, d * d / (4.0 * J), d / 4.0))
    return Entropy(H, excess, lhs)


def positivity_floor(F):
    return float(np.min(F))


# ---------------------------------------------------------------------- fits
class Fit(NamedTuple):
    value: float
    r2: float
    intercept: float
    n: int


def fit_decay(t, y=None, window=None, law="power"):
    """Least-squares decay fit on ``window``.

    ``law="power"`` fits ``log y`` against ``log(1 + t)`` and returns the
    exponent ``s`` of ``(1+t)^-s``; ``law="exponential"`` fits ``log y``
    against ``t`` and returns the rate.  ``t`` may be a :class:`TimeSeries`
    with ``y`` naming the column.
    """
    if hasattr(t, "column"):
        y = t.column(y)
        t = t.times
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if law not in ("power", "exponential"):
        raise UsageError("law must be 'power' or 'exponential'")
    if window is not None:
        sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
        t, y = t[sel], y[sel]
    if t.size < 8:
        raise FitError(f"need at least 8 samples in the window, got {t.size}")
    if np.any(~(y > 0)):
        raise FitError("decay fits need positive samples")
    x = np.log1p(t) if law == "power" else t
    ly = np.log(y)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * x + icpt)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, np.sum(ly * ly)) else 1.0 - np.sum(resid**2) / ss_tot
    return Fit(float(-slope), float(r2), float(icpt), int(t.size))


# ---------------------------------------------------------------- exponents
@dataclass(frozen=True)
class ExponentTable:
    a: float
    b: float
    gamma: float
    r: float
    sigma_r: float
    zeta_1: float
    zeta_2: float
    zeta_a: float
    zeta_b: float
    zeta: float
    d: float
    notes: tuple = field(default=())

    def decay_weight(self, t):
        """``(1+t)^sigma_r``, the growth factor compensating the decay rate."""
        return (1.0 + np.asarray(t, dtype=float)) ** self.sigma_r


def exponents(a, b, gamma, r=1.0, d=1.05):
    bad = validate_params(a, b, gamma)
    if bad:
        raise ConfigError("inadmissible cross section: " + ", ".join(bad))
    if not 1.0 <= r <= 2.0:
        raise DomainError("r must lie in [1, 2]")
    za = min(2.0 - abs(gamma), 4.0 + a) / 4.0
    zb = min(2.0 - abs(gamma), 4.0 - b)
    return ExponentTable(
        a=a, b=b, gamma=gamma, r=r,
        sigma_r=1.5 * (1.0 / r - 0.5),
        zeta_1=max(-2.0, a - gamma),
        zeta_2=min(2.0, b + gamma),
        zeta_a=za,
        zeta_b=zb,
        zeta=min(2.0 * za, 2.0 * zb + 0.5 * (a + b)),
        d=d,
        notes=("zeta_b carries no 1/4 factor while zeta_a does; kept as stated",),
    )


# --------------------------------------------------------- characteristics
def characteristics_mass(f0, L, t=0.0, x=None, grid=None, space=None):
    """``int_{|p|<=L} |f0(x - phat_x t, p)| dp`` with periodic linear interpolation in ``x``."""
    vals, grid, space = _geometry(f0, grid, space)
    inside = np.linalg.norm(grid.points, axis=1) <= L + 1e-12
    w = grid.weights * inside
    if space is None or vals.ndim == 1:
        return float(np.abs(vals) @ w)
    if x is None:
        raise UsageError("slab fields need the evaluation point x")
    phx = grid.points[:, 0] / grid.p0
    s = (x - phx * t) / space.dx
    k = np.floor(s)
    th = s - k
    k = k.astype(int)
    cols = np.arange(grid.size)
    a = vals[k % space.nx, cols]
    b = vals[(k + 1) % space.nx, cols]
    return float(np.abs(a + th * (b - a)) @ w)


# ------------------------------------------------------------------ audits
@dataclass
class AuditReport:
    rows: list = field(default_factory=list)

    def add(self, check_id, passed, measured, bound, ratio=None):
        if ratio is None:
            ratio = measured / bound if bound not in (0, 0.0) else float("nan")
        self.rows.append((check_id, "pass" if passed else "fail", float(measured), float(bound), float(ratio)))

    @property
    def passed(self):
        return all(r[1] == "pass" for r in self.rows)

    def __getitem__(self, check_id):
        for r in self.rows:
            if r[0] == check_id:
                return r
        raise KeyError(check_id)


def _ball(rng, n, radius):
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius * rng.random((n, 1)) ** (1.0 / 3.0)


def g_bounds(p, q):
    """``(|p-q| / sqrt(p0 q0), g, |p-q|)``; the middle value lies between the outer two."""
    g = relative_quantities(p, q)[0]
    d = np.linalg.norm(np.asarray(p, float) - np.asarray(q, float), axis=-1)
    return d / np.sqrt(energy(p) * energy(q)), g, d


def inequality_suite(model=None, n_samples=100_000, seed=0, radius=30.0, alphas=(-1.0, 0.5, 1.0), c=1.0):
    """Sampled audit of the two-sided ``g`` bounds and the weight-exchange inequality.

    ``(p0 q0)^alpha e^{-c|p-q|} <= C (p0)^(2 alpha) e^{-c|p-q|/2}`` is reported
    through the largest observed ``C``.  Any violation of the ``g`` bounds fails
    the suite.
    """
    model = model if model is not None else CrossSection()
    rng = np.random.default_rng(seed)
    p = _ball(rng, n_samples, radius)
    q = _ball(rng, n_samples, radius)
    lo, g, hi = g_bounds(p, q)
    tol = 1e-12 * np.maximum(1.0, hi)
    rep = AuditReport()
    up = int(np.sum(g > hi + tol))
    down = int(np.sum(g < lo - tol))
    rep.add("g_upper_violations", up == 0, up, 0, 0.0)
    rep.add("g_lower_violations", down == 0, down, 0, 0.0)
    p0, q0 = energy(p), energy(q)
    xs = np.linspace(0.0, 200.0, 200_001)
    for al in alphas:
        C = np.max((q0 / p0) ** al * np.exp(-0.5 * c * hi))
        # q0 / p0 and p0 / q0 are both at most 1 + |p - q|, which caps C
        cap = np.max((1.0 + xs) ** abs(al) * np.exp(-0.5 * c * xs))
        rep.add(f"weight_exchange_C_alpha_{al:g}", bool(C <= cap * (1 + 1e-12)), C, cap)
    return rep


def moller_ratio(p, q):
    """Operative ``vphi`` over the geometric Moller velocity (2 for generic pairs)."""
    from .kinematics import moller_velocity_geometric

    v = relative_quantities(p, q)[2]
    return v / moller_velocity_geometric(p, q)


def lemma25_audit(grid, deltas=np.linspace(0.1, 0.9, 9)):
    """Ratios ``lemma25_lhs / (|M0| + |E0| + |excess H|)`` across ``F = (1+delta) J``."""
    out = []
    for dl in deltas:
        F = (1.0 + dl) * grid.J
        M0, _, E0 = excess_quantities(F, grid)
        e = entropy_functionals(F, grid)
        out.append(e.lemma25_lhs / (abs(M0) + abs(E0) + abs(e.excess_H)))
    return np.array(out)


def nu_slope(ws, p0_range=(5.0, 40.0), n_points=12):
    """Log-log slope of ``nu`` against ``p0`` along the ``p_x`` ray."""
    p0 = np.geomspace(*p0_range, n_points)
    pts = np.zeros((n_points, 3))
    pts[:, 0] = np.sqrt(p0**2 - 1.0)
    nu = ws.eval_nu(pts)
    slope, _ = np.polyfit(np.log(p0), np.log(nu), 1)
    return float(slope), p0, nu


def probe_decay(ws, q0=None, half_width=1, direction=(1, 1, 1), n_points=None):
    """Probe ``|k^chi(p, q0)|`` along a lattice ray from ``q0``; fit ``log|k|`` vs ``|p - q0|``.

    Returns ``(slope, r2, distances, values)``.
    """
    g = ws.grid
    c = g.n // 2
    i0 = np.array([c, c, c]) if q0 is None else np.array(q0)
    dvec = np.asarray(direction, dtype=int)
    steps = []
    s = 0
    while True:
        i = i0 + s * dvec
        if np.any(i < 0) or np.any(i > g.n - 1):
            break
        steps.append(g.index(*i))
        s += 1
        if n_points is not None and len(steps) >= n_points:
            break
    steps = np.array(steps[1:])
    vals = np.abs(ws.kernel_probe(steps, g.index(*i0), half_width))
    dist = np.linalg.norm(g.points[steps] - g.points[g.index(*i0)], axis=1)
    keep = vals > 0
    x, y = dist[keep], np.log(vals[keep])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    r2 = 1.0 - np.sum(resid**2) / np.sum((y - y.mean()) ** 2)
    return float(slope), float(r2), dist, vals


def small_g_envelope(ws, h, l=0.0, epsilons=(0.4, 0.2, 0.1, 0.05), c_tilde=None):
    """``sup_p |w_l K^{1-chi}(h)(p)| e^{c p0}`` for each cutoff scale.

    ``c`` is fitted from the first (largest) cutoff as the decay rate of the
    shell maxima in ``p0`` unless given.  Returns ``(c, envelopes)``.
    """
    from .operators import OperatorWorkspace

    grid = ws.grid
    w = grid.p0**l
    raw = []
    for eps in epsilons:
        m = ws.model
        model = CrossSection(m.a, m.b, m.gamma, m.soft_enabled, float(eps))
        wse = OperatorWorkspace(grid, ws.quad, model, form="direct", corrected=ws.corrected,
                                symmetry=ws.symmetry)
        raw.append(np.abs(w * wse.eval_K(h, "one_minus_chi")))
    if c_tilde is None:
        v = raw[0]
        keep = v > 1e-300
        if np.count_nonzero(keep) < 2:
            c_tilde = 0.0
        else:
            slope, _ = np.polyfit(grid.p0[keep], np.log(v[keep]), 1)
            c_tilde = max(-slope, 0.0)
    env = np.array([np.max(v * np.exp(c_tilde * grid.p0)) for v in raw])
    return float(c_tilde), env


def gain_ratio_profile(ws, p0_values, l=0.0, mode="chi"):
    """Weighted gain-kernel row sum over ``nu`` along the ``p_x`` ray."""
    p0 = np.asarray(p0_values, dtype=float)
    pts = np.zeros((p0.size, 3))
    pts[:, 0] = np.sqrt(p0**2 - 1.0)
    rows = ws.gain_row_sum(pts, l=l, mode=mode)
    nu = ws.eval_nu(pts)
    return rows / nu


def gamma_ratio(ws, f, l=0.0, d=1.05):
    """``max_p w_l |Gamma(f,f)| / (nu ||w_l f||^{(9d+1)/5d} (int |f|)^{(d-1)/5d})``."""
    grid = ws.grid
    nu = ws.ensure_nu()
    G = ws.eval_Gamma(f, form="direct")
    w = grid.p0**l
    num = w * np.abs(G) / nu
    a = np.max(np.abs(w * f)) ** ((9 * d + 1) / (5 * d))
    b = (np.abs(f) @ grid.weights) ** ((d - 1) / (5 * d))
    return float(np.max(num) / (a * b))
