"""Compiled inner loops of the collision quadrature.

Every collision sum is organised as: for each output momentum ``p`` (parallel),
for each lattice node ``q``, for each sphere node ``omega`` about the
centre-of-momentum axis of ``p``.  Off-lattice values enter through ratio
fields ``u = X / M`` where ``M`` is a Maxwellian factor that the callers pull
out analytically (``M(p') M(q') = M(p) M(q)`` by energy conservation).  The
ratio is interpolated trilinearly, optionally with a curvature correction that
makes the interpolant exact on ``p0`` as well as on affine functions.
"""

import math

import numba
import numpy as np
from numba import njit, prange

# the system TBB is too old for numba and only produces a warning
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

BOOST_EPS = 1e-12

# FMA contraction only: no reassociation, so gain and loss sums keep identical
# rounding when the interpolated ratios are exactly 1
FASTMATH = {"contract", "nnan", "ninf", "nsz", "arcp"}

# kinds of collision sum
PRODUCT = 0  # sum_w u(p') v(q')
SUM = 1  # sum_w u(p') + u(q')
LOSS = 2  # no angular loop

# chi modes
FULL = 0
CHI = 1
ONE_MINUS_CHI = 2


@njit(inline="always")
def _chi(g, eps):
    u = (g - eps) / eps
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    return u * u * (3.0 - 2.0 * u)


@njit(inline="always")
def _radial(g, a, b, soft):
    r = 1.0 if a == 0.0 else g**a
    if soft:
        r += g ** (-b)
    return r


@njit(inline="always")
def _locate(x, y, z, n, h, pmax):
    hi = n - 1.0
    fx = min(max((x + pmax) / h, 0.0), hi)
    fy = min(max((y + pmax) / h, 0.0), hi)
    fz = min(max((z + pmax) / h, 0.0), hi)
    ix = min(int(fx), n - 2)
    iy = min(int(fy), n - 2)
    iz = min(int(fz), n - 2)
    base = (ix * n + iy) * n + iz
    return base, fx - ix, fy - iy, fz - iz, fx * h - pmax, fy * h - pmax, fz * h - pmax


@njit(inline="always")
def _tri(u, base, n, tx, ty, tz):
    n2 = n * n
    c000 = u[base]
    c001 = u[base + 1]
    c010 = u[base + n]
    c011 = u[base + n + 1]
    c100 = u[base + n2]
    c101 = u[base + n2 + 1]
    c110 = u[base + n2 + n]
    c111 = u[base + n2 + n + 1]
    c00 = c000 + tz * (c001 - c000)
    c01 = c010 + tz * (c011 - c010)
    c10 = c100 + tz * (c101 - c100)
    c11 = c110 + tz * (c111 - c110)
    c0 = c00 + ty * (c01 - c00)
    c1 = c10 + ty * (c11 - c10)
    return c0 + tx * (c1 - c0)


@njit(inline="always")
def _interp(u, ur, p0tab, corrected, x, y, z, n, h, pmax):
    base, tx, ty, tz, cx, cy, cz = _locate(x, y, z, n, h, pmax)
    val = _tri(u, base, n, tx, ty, tz)
    if corrected:
        e = math.sqrt(1.0 + cx * cx + cy * cy + cz * cz) - _tri(p0tab, base, n, tx, ty, tz)
        val += e * _tri(ur, base, n, tx, ty, tz)
    return val


@njit(inline="always")
def _frame(px, py, pz, qx, qy, qz):
    """Collision invariants and the orthonormal frame about the CM direction of p."""
    p0 = math.sqrt(1.0 + px * px + py * py + pz * pz)
    q0 = math.sqrt(1.0 + qx * qx + qy * qy + qz * qz)
    dx, dy, dz = px - qx, py - qy, pz - qz
    Px, Py, Pz = px + qx, py + qy, pz + qz
    P0 = p0 + q0
    dsum = (dx * Px + dy * Py + dz * Pz) / P0
    g2 = dx * dx + dy * dy + dz * dz - dsum * dsum
    if g2 < 0.0:
        g2 = 0.0
    g = math.sqrt(g2)
    s = g2 + 4.0
    rs = math.sqrt(s)
    vphi = g * rs / (p0 * q0)
    Pn = math.sqrt(Px * Px + Py * Py + Pz * Pz)
    gb = P0 / rs
    if Pn < BOOST_EPS:
        nx, ny, nz = 0.0, 0.0, 0.0
        kx, ky, kz = px, py, pz
        boost = 0.0
    else:
        nx, ny, nz = Px / Pn, Py / Pn, Pz / Pn
        coef = (gb - 1.0) * (px * nx + py * ny + pz * nz) - Pn / rs * p0
        kx, ky, kz = px + coef * nx, py + coef * ny, pz + coef * nz
        boost = gb - 1.0
    kn = math.sqrt(kx * kx + ky * ky + kz * kz)
    if kn > 0.0:
        kx, ky, kz = kx / kn, ky / kn, kz / kn
    else:
        kx, ky, kz = 0.0, 0.0, 1.0
    nk = nx * kx + ny * ky + nz * kz
    ex, ey, ez = nx - nk * kx, ny - nk * ky, nz - nk * kz
    en = math.sqrt(ex * ex + ey * ey + ez * ez)
    if en < 1e-8:
        ax, ay, az = abs(kx), abs(ky), abs(kz)
        if ax <= ay and ax <= az:
            ex, ey, ez = 1.0 - kx * kx, -kx * ky, -kx * kz
        elif ay <= az:
            ex, ey, ez = -ky * kx, 1.0 - ky * ky, -ky * kz
        else:
            ex, ey, ez = -kz * kx, -kz * ky, 1.0 - kz * kz
        en = math.sqrt(ex * ex + ey * ey + ez * ez)
    ex, ey, ez = ex / en, ey / en, ez / en
    fx = ky * ez - kz * ey
    fy = kz * ex - kx * ez
    fz = kx * ey - ky * ex
    return (g, vphi, Px, Py, Pz, nx, ny, nz, boost,
            kx, ky, kz, ex, ey, ez, fx, fy, fz)


@njit(inline="always")
def _kernel_factor(g, a, b, soft, chimode, eps):
    r = _radial(g, a, b, soft)
    if chimode == CHI:
        r *= _chi(g, eps)
    elif chimode == ONE_MINUS_CHI:
        r *= 1.0 - _chi(g, eps)
    return r


@njit(parallel=True, cache=True, fastmath=FASTMATH)
def collide(out, qpts, qw, qidx, ang, opp, a, b, soft, chimode, eps,
            n, h, pmax, p0tab, corrected, U, Ur, V, Vr, A, C, kind, gain, loss):
    """Gain and loss sums at each output point for ``F`` fields at once.

    ``gain[i, f] = sum_q base * A[q] * sum_w w * G_w`` with ``G_w`` either
    ``U(p') V(q')`` (PRODUCT) or ``U(p') + U(q')`` (SUM), and
    ``loss[i, f] = sum_q base * C[q, f] * S`` with ``S = sum_w w``.
    ``base = qw[q] * vphi * radial(g) * chi-factor``; pairs with ``g = 0`` drop out.
    ``U, Ur, V, Vr, C`` have shape ``(N, F)``; ``Ur`` is the curvature field of
    ``U`` used when ``corrected``.

    When the sphere rule is point-symmetric (``opp[k]`` is the node ``-omega_k``)
    ``q'(omega_k) = p'(omega_opp[k])``, so every post-collision point is
    located once.  Pass ``opp[0] < 0`` to evaluate ``q'`` directly.
    """
    m = out.shape[0]
    nw = ang.shape[0]
    nf = U.shape[1]
    S = 0.0
    for k in range(nw):
        S += ang[k, 4]
    paired = opp[0] >= 0
    for i in prange(m):
        ubuf = np.empty((nw, nf))
        vbuf = np.empty((nw, nf))
        gs = np.zeros(nf)
        ls = np.zeros(nf)
        px, py, pz = out[i, 0], out[i, 1], out[i, 2]
        for jj in range(qidx.shape[0]):
            j = qidx[jj]
            (g, vphi, Px, Py, Pz, nx, ny, nz, boost,
             kx, ky, kz, ex, ey, ez, fx, fy, fz) = _frame(px, py, pz, qpts[j, 0], qpts[j, 1], qpts[j, 2])
            if g <= 0.0:
                continue
            base = qw[j] * vphi * _kernel_factor(g, a, b, soft, chimode, eps)
            if base == 0.0:
                continue
            for f in range(nf):
                ls[f] += base * C[j, f] * S
            if kind == LOSS:
                continue
            hg = 0.5 * g
            for k in range(nw):
                ct, st, cp, sp = ang[k, 0], ang[k, 1], ang[k, 2], ang[k, 3]
                wx = ct * kx + st * (cp * ex + sp * fx)
                wy = ct * ky + st * (cp * ey + sp * fy)
                wz = ct * kz + st * (cp * ez + sp * fz)
                c = boost * (nx * wx + ny * wy + nz * wz)
                ppx = 0.5 * Px + hg * (wx + c * nx)
                ppy = 0.5 * Py + hg * (wy + c * ny)
                ppz = 0.5 * Pz + hg * (wz + c * nz)
                _fill(ubuf, vbuf, k, U, Ur, V, Vr, p0tab, corrected, kind == PRODUCT,
                      ppx, ppy, ppz, n, h, pmax)
                if not paired:
                    if kind == PRODUCT:
                        _fill(vbuf, vbuf, k, V, Vr, V, Vr, p0tab, corrected, False,
                              Px - ppx, Py - ppy, Pz - ppz, n, h, pmax)
                    else:
                        _fill(vbuf, vbuf, k, U, Ur, U, Ur, p0tab, corrected, False,
                              Px - ppx, Py - ppy, Pz - ppz, n, h, pmax)
            for f in range(nf):
                acc = 0.0
                if paired:
                    if kind == PRODUCT:
                        for k in range(nw):
                            acc += ang[k, 4] * (ubuf[k, f] * vbuf[opp[k], f])
                    else:
                        for k in range(nw):
                            acc += ang[k, 4] * (ubuf[k, f] + ubuf[opp[k], f])
                else:
                    if kind == PRODUCT:
                        for k in range(nw):
                            acc += ang[k, 4] * (ubuf[k, f] * vbuf[k, f])
                    else:
                        for k in range(nw):
                            acc += ang[k, 4] * (ubuf[k, f] + vbuf[k, f])
                gs[f] += base * A[j] * acc
        for f in range(nf):
            gain[i, f] = gs[f]
            loss[i, f] = ls[f]


@njit(inline="always")
def _tri2(u, base, n, tx, ty, tz, f):
    n2 = n * n
    c000 = u[base, f]
    c001 = u[base + 1, f]
    c010 = u[base + n, f]
    c011 = u[base + n + 1, f]
    c100 = u[base + n2, f]
    c101 = u[base + n2 + 1, f]
    c110 = u[base + n2 + n, f]
    c111 = u[base + n2 + n + 1, f]
    c00 = c000 + tz * (c001 - c000)
    c01 = c010 + tz * (c011 - c010)
    c10 = c100 + tz * (c101 - c100)
    c11 = c110 + tz * (c111 - c110)
    c0 = c00 + ty * (c01 - c00)
    c1 = c10 + ty * (c11 - c10)
    return c0 + tx * (c1 - c0)


@njit(inline="always")
def _fill(ubuf, vbuf, k, U, Ur, V, Vr, p0tab, corrected, both, x, y, z, n, h, pmax):
    # interpolate every field of U (and of V when ``both``) at one point
    base, tx, ty, tz, cx, cy, cz = _locate(x, y, z, n, h, pmax)
    e = 0.0
    if corrected:
        e = math.sqrt(1.0 + cx * cx + cy * cy + cz * cz) - _tri(p0tab, base, n, tx, ty, tz)
    for f in range(U.shape[1]):
        val = _tri2(U, base, n, tx, ty, tz, f)
        if corrected:
            val += e * _tri2(Ur, base, n, tx, ty, tz, f)
        ubuf[k, f] = val
        if both:
            val = _tri2(V, base, n, tx, ty, tz, f)
            if corrected:
                val += e * _tri2(Vr, base, n, tx, ty, tz, f)
            vbuf[k, f] = val


@njit(inline="always")
def _deposit(dep, depr, x, y, z, n, h, pmax, p0tab, corrected, wts):
    # add wts[f] times the interpolation weights of point (x, y, z)
    base, tx, ty, tz, cx, cy, cz = _locate(x, y, z, n, h, pmax)
    n2 = n * n
    e = 0.0
    if corrected:
        e = math.sqrt(1.0 + cx * cx + cy * cy + cz * cz) - _tri(p0tab, base, n, tx, ty, tz)
    nf = wts.shape[0]
    for dx in range(2):
        wx = tx if dx else 1.0 - tx
        for dy in range(2):
            wy = ty if dy else 1.0 - ty
            for dz in range(2):
                wz = tz if dz else 1.0 - tz
                idx = base + dx * n2 + dy * n + dz
                c = wx * wy * wz
                for f in range(nf):
                    dep[idx, f] += c * wts[f]
                    if corrected:
                        depr[idx, f] += (c * e) * wts[f]


@njit(parallel=True, cache=True, fastmath=FASTMATH)
def collide_weak(reps, mult, qpts, qw, Jtab, ang, opp, a, b, soft, chimode, eps,
                 n, h, pmax, p0tab, corrected, U, Ur, V, Vr, gath, dep, depr):
    """Conservative (weak-form) collision sums for the symmetric bilinear form.

    With ratios ``U = F/J``, ``V = G/J`` and the symmetrised defect
    ``D_w = (U(p')V(q') + V(p')U(q'))/2 - (U(p)V(q) + V(p)U(q))/2``:

    * ``gath[i, f] = J(p_i) sum_q qw J(q) vphi sigma sum_w w D_w`` at ``p_i = qpts[reps[i]]``;
    * ``dep``/``depr`` receive ``-mult[i] qw(p) qw(q) J(p) J(q) vphi sigma w D_w``
      spread over the interpolation stencil of ``p'`` (``depr`` holds the
      weights of the curvature correction).  The representatives are split
      into ``dep.shape[0]`` fixed contiguous chunks, each depositing into its
      own slot, so the result does not depend on the thread count.

    Requires a point-symmetric sphere rule (``opp``).
    """
    m = reps.shape[0]
    nw = ang.shape[0]
    nf = U.shape[1]
    N = qpts.shape[0]
    nchunk = dep.shape[0]
    for ch in prange(nchunk):
        for i in range(ch * m // nchunk, (ch + 1) * m // nchunk):
            ubuf = np.empty((nw, nf))
            vbuf = np.empty((nw, nf))
            gs = np.zeros(nf)
            wts = np.empty(nf)
            dw = np.empty((nw, nf))
            ip = reps[i]
            px, py, pz = qpts[ip, 0], qpts[ip, 1], qpts[ip, 2]
            for j in range(N):
                (g, vphi, Px, Py, Pz, nx, ny, nz, boost,
                 kx, ky, kz, ex, ey, ez, fx, fy, fz) = _frame(px, py, pz, qpts[j, 0], qpts[j, 1], qpts[j, 2])
                if g <= 0.0:
                    continue
                base = qw[j] * vphi * _kernel_factor(g, a, b, soft, chimode, eps) * Jtab[j]
                if base == 0.0:
                    continue
                hg = 0.5 * g
                for k in range(nw):
                    ct, st, cp, sp = ang[k, 0], ang[k, 1], ang[k, 2], ang[k, 3]
                    wx = ct * kx + st * (cp * ex + sp * fx)
                    wy = ct * ky + st * (cp * ey + sp * fy)
                    wz = ct * kz + st * (cp * ez + sp * fz)
                    c = boost * (nx * wx + ny * wy + nz * wz)
                    _fill(ubuf, vbuf, k, U, Ur, V, Vr, p0tab, corrected, True,
                          0.5 * Px + hg * (wx + c * nx), 0.5 * Py + hg * (wy + c * ny),
                          0.5 * Pz + hg * (wz + c * nz), n, h, pmax)
                for f in range(nf):
                    loc = 0.5 * (U[ip, f] * V[j, f] + V[ip, f] * U[j, f])
                    acc = 0.0
                    for k in range(nw):
                        d = 0.5 * (ubuf[k, f] * vbuf[opp[k], f] + vbuf[k, f] * ubuf[opp[k], f]) - loc
                        dw[k, f] = d
                        acc += ang[k, 4] * d
                    gs[f] += base * acc
                scale = -mult[i] * qw[ip] * Jtab[ip] * base
                for k in range(nw):
                    ct, st, cp, sp = ang[k, 0], ang[k, 1], ang[k, 2], ang[k, 3]
                    wx = ct * kx + st * (cp * ex + sp * fx)
                    wy = ct * ky + st * (cp * ey + sp * fy)
                    wz = ct * kz + st * (cp * ez + sp * fz)
                    c = boost * (nx * wx + ny * wy + nz * wz)
                    nz_ = False
                    for f in range(nf):
                        wts[f] = scale * ang[k, 4] * dw[k, f]
                        if wts[f] != 0.0:
                            nz_ = True
                    if nz_:
                        _deposit(dep[ch], depr[ch], 0.5 * Px + hg * (wx + c * nx),
                                 0.5 * Py + hg * (wy + c * ny), 0.5 * Pz + hg * (wz + c * nz),
                                 n, h, pmax, p0tab, corrected, wts)
            for f in range(nf):
                gath[i, f] = Jtab[ip] * gs[f]


@njit(inline="always")
def _scatter(row, rowr, x, y, z, n, h, pmax, p0tab, corrected, wt):
    base, tx, ty, tz, cx, cy, cz = _locate(x, y, z, n, h, pmax)
    n2 = n * n
    e = 0.0
    if corrected:
        e = math.sqrt(1.0 + cx * cx + cy * cy + cz * cz) - _tri(p0tab, base, n, tx, ty, tz)
    for dx in range(2):
        wx = tx if dx else 1.0 - tx
        for dy in range(2):
            wy = ty if dy else 1.0 - ty
            for dz in range(2):
                wz = tz if dz else 1.0 - tz
                idx = base + dx * n2 + dy * n + dz
                c = wt * wx * wy * wz
                row[idx] += c
                if corrected:
                    rowr[idx] += c * e


@njit(parallel=True, cache=True, fastmath=FASTMATH)
def assemble_sum(out, qpts, qw, ang, a, b, soft, chimode, eps,
                 n, h, pmax, p0tab, corrected, A, rows, rowsr):
    """Matrix form of the SUM-kind collision sum minus its loss.

    Row ``i`` satisfies ``rows[i] @ u + rowsr[i] @ r = gain[i] - loss[i]``
    (with ``C = A * u``), where ``r`` is the curvature field used by the
    corrected interpolant.
    """
    m = out.shape[0]
    nw = ang.shape[0]
    N = qpts.shape[0]
    S = 0.0
    for k in range(nw):
        S += ang[k, 4]
    for i in prange(m):
        row = rows[i]
        rowr = rowsr[i]
        px, py, pz = out[i, 0], out[i, 1], out[i, 2]
        for j in range(N):
            if A[j] == 0.0:
                continue
            qx, qy, qz = qpts[j, 0], qpts[j, 1], qpts[j, 2]
            (g, vphi, Px, Py, Pz, nx, ny, nz, boost,
             kx, ky, kz, ex, ey, ez, fx, fy, fz) = _frame(px, py, pz, qx, qy, qz)
            if g <= 0.0:
                continue
            base = qw[j] * vphi * _kernel_factor(g, a, b, soft, chimode, eps) * A[j]
            if base == 0.0:
                continue
            row[j] -= base * S
            hg = 0.5 * g
            for k in range(nw):
                ct, st, cp, sp, w = ang[k, 0], ang[k, 1], ang[k, 2], ang[k, 3], ang[k, 4]
                wx = ct * kx + st * (cp * ex + sp * fx)
                wy = ct * ky + st * (cp * ey + sp * fy)
                wz = ct * kz + st * (cp * ez + sp * fz)
                c = boost * (nx * wx + ny * wy + nz * wz)
                ppx = 0.5 * Px + hg * (wx + c * nx)
                ppy = 0.5 * Py + hg * (wy + c * ny)
                ppz = 0.5 * Pz + hg * (wz + c * nz)
                wt = base * w
                _scatter(row, rowr, ppx, ppy, ppz, n, h, pmax, p0tab, corrected, wt)
                _scatter(row, rowr, Px - ppx, Py - ppy, Pz - ppz, n, h, pmax, p0tab, corrected, wt)


@njit(cache=True)
def post_collision_nodes(p, q, ang):
    """Post-collision pairs for every sphere node (used by tests and probes)."""
    nw = ang.shape[0]
    outp = np.empty((nw, 3))
    outq = np.empty((nw, 3))
    (g, vphi, Px, Py, Pz, nx, ny, nz, boost,
     kx, ky, kz, ex, ey, ez, fx, fy, fz) = _frame(p[0], p[1], p[2], q[0], q[1], q[2])
    hg = 0.5 * g
    for k in range(nw):
        ct, st, cp, sp = ang[k, 0], ang[k, 1], ang[k, 2], ang[k, 3]
        wx = ct * kx + st * (cp * ex + sp * fx)
        wy = ct * ky + st * (cp * ey + sp * fy)
        wz = ct * kz + st * (cp * ez + sp * fz)
        c = boost * (nx * wx + ny * wy + nz * wz)
        outp[k, 0] = 0.5 * Px + hg * (wx + c * nx)
        outp[k, 1] = 0.5 * Py + hg * (wy + c * ny)
        outp[k, 2] = 0.5 * Pz + hg * (wz + c * nz)
        outq[k, 0] = Px - outp[k, 0]
        outq[k, 1] = Py - outp[k, 1]
        outq[k, 2] = Pz - outp[k, 2]
    return outp, outq


@njit(parallel=True, cache=True, fastmath=FASTMATH)
def gain_row_sum(out, qpts, qw, ang, a, b, soft, chimode, eps, l, res):
    """``w_l(p) sum_q base sqrt(J(q)) sum_w w [sqrt(J(q')) w_-l(p') + sqrt(J(p')) w_-l(q')]``.

    All factors are evaluated analytically, so output points may lie anywhere.
    """
    m = out.shape[0]
    nw = ang.shape[0]
    N = qpts.shape[0]
    c4 = 1.0 / math.sqrt(4.0 * math.pi)
    for i in prange(m):
        px, py, pz = out[i, 0], out[i, 1], out[i, 2]
        p0 = math.sqrt(1.0 + px * px + py * py + pz * pz)
        tot = 0.0
        for j in range(N):
            qx, qy, qz = qpts[j, 0], qpts[j, 1], qpts[j, 2]
            (g, vphi, Px, Py, Pz, nx, ny, nz, boost,
             kx, ky, kz, ex, ey, ez, fx, fy, fz) = _frame(px, py, pz, qx, qy, qz)
            if g <= 0.0:
                continue
            q0 = math.sqrt(1.0 + qx * qx + qy * qy + qz * qz)
            base = qw[j] * vphi * _kernel_factor(g, a, b, soft, chimode, eps) * c4 * math.exp(-0.5 * q0)
            if base == 0.0:
                continue
            hg = 0.5 * g
            P0 = p0 + q0
            acc = 0.0
            for k in range(nw):
                ct, st, cp, sp = ang[k, 0], ang[k, 1], ang[k, 2], ang[k, 3]
                wx = ct * kx + st * (cp * ex + sp * fx)
                wy = ct * ky + st * (cp * ey + sp * fy)
                wz = ct * kz + st * (cp * ez + sp * fz)
                c = boost * (nx * wx + ny * wy + nz * wz)
                ppx = 0.5 * Px + hg * (wx + c * nx)
                ppy = 0.5 * Py + hg * (wy + c * ny)
                ppz = 0.5 * Pz + hg * (wz + c * nz)
                e1 = math.sqrt(1.0 + ppx * ppx + ppy * ppy + ppz * ppz)
                e2 = P0 - e1
                acc += ang[k, 4] * c4 * (math.exp(-0.5 * e2) * e1 ** (-l) + math.exp(-0.5 * e1) * e2 ** (-l))
            tot += base * acc
        res[i] = p0**l * tot
