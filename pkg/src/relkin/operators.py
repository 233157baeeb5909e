"""Collision operators on the momentum lattice.

Two discretisations share the same collision nodes:

``direct``
    the pointwise quadrature ``sum_q sum_w W [F(p')G(q') - F(p)G(q)]`` with
    off-lattice values gathered by interpolation;
``conservative``
    the symmetric weak form: half the direct gather plus half its adjoint,
    which scatters the collision defect onto the interpolation stencil of
    ``p'``.  Because the interpolant is exact on ``1, p, p0``, mass, momentum
    and energy are conserved by every single collision (up to clamping at the
    box faces).

Off-lattice values are always taken relative to a Maxwellian factor
(``X(p') = M(p') I[X/M](p')``), so ``Q(J, J)`` vanishes identically in both
forms.  Operators are evaluated on orbit representatives of the lattice
symmetries the inputs share and filled in by symmetry.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .cross_section import CrossSection
from .errors import UsageError
from .grid import AngularQuadrature, DistributionField, MomentumGrid, build_angular_quadrature

_CHI_MODES = {"full": kern.FULL, "chi": kern.CHI, "one_minus_chi": kern.ONE_MINUS_CHI}
_FORMS = ("conservative", "direct")
SYM_TOL = 1e-13
# fixed deposit partition of the weak form (keeps results independent of threads)
WEAK_CHUNKS = 16


def _values(x, grid):
    if isinstance(x, DistributionField):
        if x.grid is not grid and (x.grid.n != grid.n or x.grid.pmax != grid.pmax):
            raise UsageError("field lives on a different momentum grid")
        if x.space is not None:
            raise UsageError("operators act on homogeneous fields; apply them per x-slice")
        return x.values
    v = np.asarray(x)
    if v.shape != (grid.size,):
        raise UsageError(f"expected an array of shape ({grid.size},), got {v.shape}")
    return v


def _wrap_like(template, values, grid, kind):
    if isinstance(template, DistributionField):
        return DistributionField(grid, values, kind=kind)
    return values


def _curvature(u, n):
    """Sum over axes of second differences, one-sided at the faces."""
    shape = u.shape
    u3 = u.reshape((n, n, n) + shape[1:])
    out = np.zeros_like(u3)
    for ax in range(3):
        v = np.moveaxis(u3, ax, 0)
        d = np.empty_like(v)
        d[1:-1] = v[:-2] - 2.0 * v[1:-1] + v[2:]
        d[0] = d[1]
        d[-1] = d[-2]
        out += np.moveaxis(d, 0, ax)
    return out.reshape(shape)


def _curvature_adjoint(r, n):
    """Transpose of :func:`_curvature`."""
    shape = r.shape
    r3 = r.reshape((n, n, n) + shape[1:])
    out = np.zeros_like(r3)
    for ax in range(3):
        v = np.moveaxis(r3, ax, 0)
        o = np.moveaxis(out, ax, 0)
        w = v.copy()
        # the face rows copy their neighbour's stencil
        w[1] = w[1] + w[0]
        w[-2] = w[-2] + w[-1]
        inner = w[1:-1]
        o[:-2] += inner
        o[1:-1] -= 2.0 * inner
        o[2:] += inner
    return out.reshape(shape)


@dataclass
class _Orbits:
    reps: np.ndarray
    rep_of: np.ndarray
    sign_of: np.ndarray
    mult: np.ndarray
    ks: np.ndarray
    signs: np.ndarray


class OperatorWorkspace:
    """Grid, sphere rule, kernel model and the tables shared by all operators.

    Parameters
    ----------
    grid, quad, model
        Momentum lattice, sphere rule and scattering kernel.
    form
        ``"conservative"`` (default) or ``"direct"``; see the module docstring.
        ``eval_K`` and the probes can override it per call.
    corrected
        Use the curvature-corrected interpolant (exact on ``p0``).
    symmetry
        Evaluate on orbit representatives of the detected lattice symmetries.
    """

    def __init__(self, grid: MomentumGrid, quad: AngularQuadrature = None,
                 model: CrossSection = None, *, form="conservative", corrected=True,
                 symmetry=True):
        if form not in _FORMS:
            raise UsageError(f"form must be one of {_FORMS}")
        self.grid = grid
        self.quad = quad if quad is not None else build_angular_quadrature(8, 16)
        self.model = model if model is not None else CrossSection()
        self.form = form
        self.corrected = bool(corrected)
        self.symmetry = bool(symmetry)
        self.J = grid.J
        self.sqrtJ = grid.sqrtJ
        self.p0 = grid.p0
        self.nu = None
        ct, st, cp, sp = self.quad.flat
        gam = self.model.gamma
        if self.quad.absorbs_sin_gamma:
            if self.quad.gamma != gam:
                raise UsageError("the Jacobi sphere rule was built for a different gamma")
            kw = self.quad.weights
        else:
            kw = self.quad.weights * st**gam if gam else self.quad.weights
        self._ang = np.ascontiguousarray(np.stack([ct, st, cp, sp, kw], axis=1))
        self._opp = self._opposite_nodes()
        self._curv_p0 = _curvature(self.p0, grid.n)
        self._orbit_cache = {}
        self._all = np.arange(grid.size, dtype=np.int64)

    # ------------------------------------------------------------------ helpers
    def _opposite_nodes(self):
        q = self.quad
        nt, nph = q.cos_theta.size, q.phi.size
        sym = np.allclose(q.cos_theta, -q.cos_theta[::-1], atol=1e-14, rtol=0)
        if nph % 2 or not sym:
            return np.array([-1], dtype=np.int64)
        it, ip = np.divmod(np.arange(nt * nph), nph)
        return ((nt - 1 - it) * nph + (ip + nph // 2) % nph).astype(np.int64)

    @property
    def point_symmetric(self):
        return self._opp[0] >= 0

    def weight(self, l):
        return self.p0**l

    def _model_args(self, chimode):
        m = self.model
        return (float(m.a), float(m.b), bool(m.soft_enabled), int(chimode), float(m.chi_epsilon))

    def _ratio(self, u):
        u = np.ascontiguousarray(u, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        if self.corrected:
            return u, np.ascontiguousarray(_curvature(u, self.grid.n) / self._curv_p0[:, None])
        return u, np.zeros_like(u)

    def _orbits(self, args):
        """Orbits of the largest signed-permutation subgroup leaving ``args`` invariant.

        Each argument may change sign under a group element (odd fields); the
        result of a multilinear operator then picks up the product of signs.
        """
        N = self.grid.size
        if not self.symmetry:
            ks = np.array([0])
            signs = np.array([1.0])
        else:
            maps = self.grid.symmetry_maps
            ks, signs = [], []
            for k in range(maps.shape[0]):
                s_tot = 1.0
                ok = True
                for a in args:
                    a2 = a.reshape(N, -1)
                    scale = np.max(np.abs(a2)) if a2.size else 0.0
                    tol = SYM_TOL * max(scale, 1e-300)
                    ar = a2[maps[k]]
                    if np.all(np.abs(ar - a2) <= tol):
                        s = 1.0
                    elif np.all(np.abs(ar + a2) <= tol):
                        s = -1.0
                    else:
                        ok = False
                        break
                    s_tot *= s
                if ok:
                    ks.append(k)
                    signs.append(s_tot)
            ks = np.array(ks)
            signs = np.array(signs)
        key = (tuple(ks), tuple(signs))
        hit = self._orbit_cache.get(key)
        if hit is not None:
            return hit
        maps = self.grid.symmetry_maps[ks]
        which = np.argmin(maps, axis=0)
        rep_of = maps[which, np.arange(N)]
        sign_of = signs[which]
        reps, counts = np.unique(rep_of, return_counts=True)
        orb = _Orbits(reps.astype(np.int64), rep_of, sign_of, counts.astype(float), ks, signs)
        self._orbit_cache[key] = orb
        return orb

    def _fill(self, orb, vals):
        # vals: (len(reps), F) -> (N, F)
        pos = np.searchsorted(orb.reps, orb.rep_of)
        return vals[pos] * orb.sign_of[:, None]

    def _symmetrize(self, orb, arr):
        # average of s_k * arr[maps_k] over the subgroup
        maps = self.grid.symmetry_maps
        out = np.zeros_like(arr)
        for k, s in zip(orb.ks, orb.signs):
            out += s * arr[maps[k]]
        return out / len(orb.ks)

    def _direct(self, kind, out, U=None, V=None, A=None, C=None, chimode=kern.FULL, qidx=None):
        """Raw gain/loss sums of the direct form at arbitrary output points."""
        N = self.grid.size
        nf = 1 if C is None else C.shape[1]
        if U is None:
            U = np.zeros((N, nf))
        Uv, Ur = self._ratio(U)
        if V is None:
            Vv, Vr = Uv, Ur
        else:
            Vv, Vr = self._ratio(V)
        A = self.J if A is None else A
        C = np.zeros((N, Uv.shape[1])) if C is None else np.ascontiguousarray(C, dtype=float)
        out = np.ascontiguousarray(np.atleast_2d(out), dtype=float)
        gain = np.zeros((out.shape[0], Uv.shape[1]))
        loss = np.zeros_like(gain)
        qidx = self._all if qidx is None else np.asarray(qidx, dtype=np.int64)
        g = self.grid
        kern.collide(out, g.points, g.weights, qidx, self._ang, self._opp,
                     *self._model_args(chimode), g.n, g.h, g.pmax, self.p0, self.corrected,
                     Uv, Ur, Vv, Vr, np.ascontiguousarray(A, dtype=float), C, kind, gain, loss)
        return gain, loss

    def _weak(self, U, V, chimode=kern.FULL):
        """Conservative form of the symmetric bilinear collision operator.

        Returns ``Q_w(JU, JV)`` on the lattice, shape ``(N, F)``.
        """
        if not self.point_symmetric:
            raise UsageError("the conservative form needs an even n_phi and a symmetric polar rule")
        g = self.grid
        N = g.size
        Uv, Ur = self._ratio(U)
        Vv, Vr = self._ratio(V)
        orb = self._orbits([Uv, Vv])
        nf = Uv.shape[1]
        nt = min(WEAK_CHUNKS, orb.reps.size)
        gath = np.zeros((orb.reps.size, nf))
        dep = np.zeros((nt, N, nf))
        depr = np.zeros((nt, N, nf))
        kern.collide_weak(orb.reps, orb.mult, g.points, g.weights, self.J, self._ang, self._opp,
                          *self._model_args(chimode), g.n, g.h, g.pmax, self.p0, self.corrected,
                          Uv, Ur, Vv, Vr, gath, dep, depr)
        dep = dep.sum(axis=0)
        if self.corrected:
            dep = dep + _curvature_adjoint(depr.sum(axis=0) / self._curv_p0[:, None], g.n)
        scatter = self._symmetrize(orb, dep) / g.weights[:, None]
        return 0.5 * (self._fill(orb, gath) + scatter)

    def _loss_nodes(self, C, chimode=kern.FULL):
        """``sum_q W C(q) S`` on the lattice (loss rates)."""
        C = np.ascontiguousarray(C, dtype=float)
        if C.ndim == 1:
            C = C[:, None]
        orb = self._orbits([C])
        # a loss rate is linear in C but carries no sign flip of its own
        _, loss = self._direct(kern.LOSS, self.grid.points[orb.reps], C=C, chimode=chimode)
        return self._fill(orb, loss)

    # ------------------------------------------------------------- operators
    def eval_nu(self, points=None):
        """Collision frequency ``nu(p) = sum_q sum_w W J(q)``.

        Without ``points`` the lattice table is computed, cached on the
        workspace and returned; otherwise ``nu`` is returned at the given
        momenta (which may lie outside the box).
        """
        if points is None:
            self.nu = self._loss_nodes(self.J)[:, 0]
            return self.nu
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _, loss = self._direct(kern.LOSS, pts, C=self.J[:, None])
        return loss[:, 0]

    def ensure_nu(self):
        if self.nu is None:
            self.eval_nu()
        return self.nu

    def eval_loss_rate_B(self, F):
        """``B(p) = sum_q sum_w W F(q)``; equals ``nu`` for ``F = J``."""
        Fv = _values(F, self.grid)
        if np.iscomplexobj(Fv):
            raise UsageError("B is defined for real F only")
        return self._loss_nodes(Fv)[:, 0]

    def eval_Q(self, F, G=None, form=None):
        """Collision operator ``Q(F, G)``; the conservative form is the symmetric part."""
        form = form or self.form
        Fv = _values(F, self.grid)
        Gv = Fv if G is None else _values(G, self.grid)
        if np.iscomplexobj(Fv) or np.iscomplexobj(Gv):
            raise UsageError("Q is defined for real fields only")
        U = Fv / self.J
        V = Gv / self.J
        if form == "conservative":
            out = self._weak(U, V)[:, 0]
        else:
            orb = self._orbits([U[:, None], V[:, None]])
            gain, loss = self._direct(kern.PRODUCT, self.grid.points[orb.reps], U=U, V=V,
                                      C=Gv[:, None])
            Fr = Fv[orb.reps]
            vals = self.J[orb.reps, None] * gain - Fr[:, None] * loss
            out = self._fill(orb, vals)[:, 0]
        return _wrap_like(F, out, self.grid, "Q")

    def eval_Gamma(self, h1, h2=None, gain_only=False, form=None):
        """Nonlinear term ``Gamma(h1, h2) = J^-1/2 Q(sqrt(J) h1, sqrt(J) h2)``.

        ``gain_only`` drops the loss ``h1(p) sum_q W sqrt(J(q)) h2(q)``
        (symmetrised in the conservative form).
        """
        form = form or self.form
        a = _values(h1, self.grid)
        b = a if h2 is None else _values(h2, self.grid)
        if np.iscomplexobj(a) or np.iscomplexobj(b):
            raise UsageError("Gamma is defined for real fields only")
        u1 = a / self.sqrtJ
        u2 = b / self.sqrtJ
        if form == "conservative":
            out = self._weak(u1, u2)[:, 0] / self.sqrtJ
            if gain_only:
                beta1 = self._loss_nodes(self.sqrtJ * a)[:, 0]
                beta2 = beta1 if h2 is None else self._loss_nodes(self.sqrtJ * b)[:, 0]
                out = out + 0.5 * (a * beta2 + b * beta1)
        else:
            orb = self._orbits([u1[:, None], u2[:, None]])
            gain, loss = self._direct(kern.PRODUCT, self.grid.points[orb.reps], U=u1, V=u2,
                                      C=(self.sqrtJ * b)[:, None])
            r = orb.reps
            vals = self.sqrtJ[r, None] * gain
            if not gain_only:
                vals = vals - a[r, None] * loss
            out = self._fill(orb, vals)[:, 0]
        return _wrap_like(h1, out, self.grid, "h")

    def eval_K(self, h, mode="full", form=None):
        """Linearised gain-minus-partner-loss operator ``K`` (``nu - K`` is the linearisation).

        ``mode`` selects the integrand factor ``1``, ``chi(g)`` or ``1 - chi(g)``.
        Complex fields are handled by linearity.
        """
        form = form or self.form
        if mode not in _CHI_MODES:
            raise UsageError(f"mode must be one of {tuple(_CHI_MODES)}")
        chimode = _CHI_MODES[mode]
        hv = _values(h, self.grid)
        if np.iscomplexobj(hv):
            parts = np.stack([hv.real, hv.imag], axis=1)
        else:
            parts = hv[:, None].astype(float)
        u = parts / self.sqrtJ[:, None]
        if form == "conservative":
            nu = self._loss_nodes(self.J, chimode)[:, 0]
            ones = np.ones_like(u)
            q = self._weak(ones, u, chimode)
            vals = nu[:, None] * parts + 2.0 * q / self.sqrtJ[:, None]
        else:
            orb = self._orbits([u])
            gain, loss = self._direct(kern.SUM, self.grid.points[orb.reps], U=u,
                                      C=self.J[:, None] * u, chimode=chimode)
            vals = self._fill(orb, self.sqrtJ[orb.reps, None] * (gain - loss))
        out = vals[:, 0] + 1j * vals[:, 1] if np.iscomplexobj(hv) else vals[:, 0]
        return _wrap_like(h, out, self.grid, "h")

    def collision_rhs(self, f):
        """``K f + Gamma(f, f)`` in one pass, as ``nu f + J^-1/2 Q(F, F)`` with ``F = J + sqrt(J) f``."""
        fv = _values(f, self.grid)
        nu = self.ensure_nu()
        U = 1.0 + fv / self.sqrtJ
        if self.form == "conservative":
            q = self._weak(U, U)[:, 0]
        else:
            q = self.eval_Q(self.J * U, form="direct")
        return nu * fv + q / self.sqrtJ

    def weighted_wrap(self, op, l, *inputs, **kwargs):
        """``w_l op(inputs / w_l)`` for ``op`` in ``{"K", "Gamma"}``."""
        w = self.weight(l)
        args = [_values(x, self.grid) / w for x in inputs]
        if op == "K":
            if len(args) != 1:
                raise UsageError("K takes one input")
            out = w * self.eval_K(args[0], **kwargs)
        elif op == "Gamma":
            if len(args) not in (1, 2):
                raise UsageError("Gamma takes one or two inputs")
            out = w * self.eval_Gamma(*args, **kwargs)
        else:
            raise UsageError("op must be 'K' or 'Gamma'")
        return _wrap_like(inputs[0], out, self.grid, "h")

    # ------------------------------------------------------------------ probes
    def _node(self, p):
        g = self.grid
        p = np.asarray(p)
        if p.ndim == 0:
            i = int(p)
            if not 0 <= i < g.size:
                raise UsageError("node index outside the grid")
            return i
        if p.shape == (3,) and np.issubdtype(p.dtype, np.integer):
            if np.any(p < 0) or np.any(p >= g.n):
                raise UsageError("node index outside the grid")
            return int(g.index(*p))
        raise UsageError("nodes are flat indices or integer (ix, iy, iz) triples")

    def bump(self, q0, half_width):
        """Indicator of the node cube of half-width ``half_width`` around ``q0``, unit mass."""
        g = self.grid
        i0 = np.array(np.unravel_index(self._node(q0), g.shape))
        if np.any(i0 - half_width < 0) or np.any(i0 + half_width > g.n - 1):
            raise UsageError("probe box leaves the grid")
        ind = np.indices(g.shape).reshape(3, -1).T
        mask = np.all(np.abs(ind - i0) <= half_width, axis=1)
        b = mask.astype(float)
        return b / np.sum(b * g.weights)

    def kernel_probe(self, p, q0, half_width=1, part="chi", mode="chi"):
        """Estimate of the reduced kernel ``k(p, q0)`` of ``K`` (direct form).

        ``part`` is ``"chi"`` (gain minus loss), ``"gain"`` or ``"loss"``;
        the loss part is returned with a positive sign.  ``p`` may be one node
        or an array of flat node indices.
        """
        if part not in ("chi", "gain", "loss"):
            raise UsageError("part must be 'chi', 'gain' or 'loss'")
        b = self.bump(q0, half_width)
        idx = np.atleast_1d(np.asarray(p))
        if idx.ndim == 1 and idx.size == 3 and np.issubdtype(idx.dtype, np.integer) and np.ndim(p) == 1 \
                and not isinstance(p, np.ndarray):
            idx = np.array([self._node(p)])
        out_pts = self.grid.points[idx]
        u = (b / self.sqrtJ)[:, None]
        chimode = _CHI_MODES[mode]
        if part == "loss":
            support = np.nonzero(b)[0]
            _, loss = self._direct(kern.LOSS, out_pts, C=self.J[:, None] * u, chimode=chimode,
                                   qidx=support)
            vals = self.sqrtJ[idx] * loss[:, 0]
        else:
            gain, loss = self._direct(kern.SUM, out_pts, U=u, C=self.J[:, None] * u, chimode=chimode)
            vals = self.sqrtJ[idx] * (gain[:, 0] - (loss[:, 0] if part == "chi" else 0.0))
        return vals if np.ndim(p) == 1 and isinstance(p, np.ndarray) else float(vals[0])

    def gain_row_sum(self, points, l=0.0, mode="chi"):
        """``w_l(p) int k_gain(p, q) w_-l(q) dq`` evaluated without interpolation.

        The gain kernel is non-negative, so this is the absolute row sum of the
        weighted gain kernel.  ``points`` may lie outside the box.
        """
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
        out = np.zeros(pts.shape[0])
        g = self.grid
        kern.gain_row_sum(pts, g.points, g.weights, self._ang, *self._model_args(_CHI_MODES[mode]),
                          float(l), out)
        return out

    # ---------------------------------------------------------------- matrices
    def assemble_K(self, rows=None, mode="full"):
        """Dense rows of the direct-form ``K`` acting on lattice values of ``h``.

        Returns an array of shape ``(len(rows), N)``; all rows by default.
        """
        g = self.grid
        rows = self._all if rows is None else np.asarray(rows, dtype=np.int64)
        out = np.ascontiguousarray(g.points[rows])
        A = np.zeros((rows.size, g.size))
        Ar = np.zeros((rows.size, g.size))
        kern.assemble_sum(out, g.points, g.weights, self._ang, *self._model_args(_CHI_MODES[mode]),
                          g.n, g.h, g.pmax, self.p0, self.corrected, self.J, A, Ar)
        if self.corrected:
            A += _curvature_adjoint((Ar / self._curv_p0[None, :]).T, g.n).T
        # h -> u = h / sqrt(J); output multiplied by sqrt(J(p))
        return A * self.sqrtJ[rows, None] / self.sqrtJ[None, :]


def build_workspace(pmax=12.0, n=25, n_theta=8, n_phi=16, model=None, jacobi=False, **kw):
    """Convenience constructor with the default desk-scale resolution."""
    from .grid import build_momentum_grid

    model = model if model is not None else CrossSection()
    grid = build_momentum_grid(pmax, n)
    quad = build_angular_quadrature(n_theta, n_phi, model.gamma, jacobi)
    return OperatorWorkspace(grid, quad, model, **kw)
