"""Relativistic two-body collision geometry.

All momenta are dimensionless (units of ``mc`` with ``m = c = 1``) and are
passed around as plain arrays whose last axis has length 3, so every function
here broadcasts over leading axes.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCollisionError, DomainError

# below this |p + q| the boost direction is undefined and the boost is dropped
BOOST_EPS = 1e-12


def _as_momentum(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1:] != (3,):
        raise DomainError(f"momentum must have a trailing axis of length 3, got {p.shape}")
    return p


def energy(p):
    """Energy ``p0 = sqrt(1 + |p|^2)``."""
    p = _as_momentum(p)
    return np.sqrt(1.0 + np.einsum("...i,...i->...", p, p))


def energy_and_velocity(p):
    """Return ``(p0, phat)`` with ``phat = p / p0``.

    Raises
    ------
    DomainError
        If any component is not finite.
    """
    p = _as_momentum(p)
    if not np.all(np.isfinite(p)):
        raise DomainError("momentum components must be finite")
    p0 = energy(p)
    return p0, p / p0[..., None]


def relative_quantities(p, q):
    """Invariant relative momentum ``g``, ``s = g^2 + 4`` and Moller velocity.

    ``g^2 = 2 (p0 q0 - p.q - 1)`` is evaluated through the algebraically equal
    form ``|p - q|^2 - ((p - q).(p + q))^2 / (p0 + q0)^2``, which does not lose
    digits when ``p`` and ``q`` are close.  The Moller velocity is
    ``g sqrt(s) / (p0 q0)``.
    """
    p = _as_momentum(p)
    q = _as_momentum(q)
    p0 = energy(p)
    q0 = energy(q)
    d = p - q
    dd = np.einsum("...i,...i->...", d, d)
    dsum = np.einsum("...i,...i->...", d, p + q) / (p0 + q0)
    g2 = np.maximum(dd - dsum * dsum, 0.0)
    g = np.sqrt(g2)
    s = g2 + 4.0
    vphi = g * np.sqrt(s) / (p0 * q0)
    return g, s, vphi


def g_direct(p, q):
    """``g`` straight from ``sqrt(2 (p0 q0 - p.q - 1))`` with the radicand clamped."""
    p = _as_momentum(p)
    q = _as_momentum(q)
    rad = energy(p) * energy(q) - np.einsum("...i,...i->...", p, q) - 1.0
    return np.sqrt(2.0 * np.maximum(rad, 0.0))


def moller_velocity_geometric(p, q):
    """``sqrt(|phat - qhat|^2 - |phat x qhat|^2)``.

    Kept only for the diagnostic comparing it with ``g sqrt(s) / (p0 q0)``;
    the two differ by exactly a factor of 2.
    """
    _, ph = energy_and_velocity(p)
    _, qh = energy_and_velocity(q)
    d = ph - qh
    c = np.cross(ph, qh)
    val = np.einsum("...i,...i->...", d, d) - np.einsum("...i,...i->...", c, c)
    return np.sqrt(np.maximum(val, 0.0))


def invariant_mass_squared(p, q):
    """``s`` from ``(p0 + q0)^2 - |p + q|^2``; an independent check on ``g^2 + 4``."""
    p = _as_momentum(p)
    q = _as_momentum(q)
    P = p + q
    P0 = energy(p) + energy(q)
    return P0 * P0 - np.einsum("...i,...i->...", P, P)


@dataclass
class CollisionOutcome:
    p_prime: np.ndarray
    q_prime: np.ndarray
    g: np.ndarray
    s: np.ndarray
    cos_theta: np.ndarray


def _boost_frame(p, q):
    P = p + q
    Pn = np.sqrt(np.einsum("...i,...i->...", P, P))
    P0 = energy(p) + energy(q)
    g, s, _ = relative_quantities(p, q)
    safe = np.where(Pn < BOOST_EPS, 1.0, Pn)
    n = P / safe[..., None]
    gamma_b = P0 / np.sqrt(s)
    return P, Pn, n, gamma_b, g, s


def post_collision(p, q, omega):
    """Post-collision momenta for the pre-collision pair ``(p, q)``.

    ``omega`` is the direction of ``p'`` in the centre-of-momentum frame; the
    lab-frame momenta are

        p' = (p+q)/2 + (g/2) [omega + (gamma_b - 1) n (n.omega)]
        q' = (p+q) - p'

    with ``n = (p+q)/|p+q|`` and ``gamma_b = (p0+q0)/sqrt(s)``.  The boost term
    is dropped when ``|p+q| < 1e-12``, where its coefficient vanishes anyway.
    """
    p = _as_momentum(p)
    q = _as_momentum(q)
    omega = _as_momentum(omega)
    norm = np.sqrt(np.einsum("...i,...i->...", omega, omega))
    if np.any(np.abs(norm - 1.0) > 1e-12):
        raise DomainError("omega must be a unit vector (|omega| = 1 within 1e-12)")
    P, Pn, n, gamma_b, g, s = _boost_frame(p, q)
    nw = np.einsum("...i,...i->...", n, omega)
    corr = np.where(Pn < BOOST_EPS, 0.0, gamma_b - 1.0) * nw
    p_prime = 0.5 * P + 0.5 * g[..., None] * (omega + corr[..., None] * n)
    q_prime = P - p_prime
    g_ok = g > 0
    cos_theta = np.ones_like(g)
    if np.any(g_ok):
        cos_theta = np.where(
            g_ok,
            _cos_from_transfer(p, q, p_prime, np.where(g_ok, g, 1.0)),
            1.0,
        )
    return CollisionOutcome(p_prime, q_prime, g, s, cos_theta)


def _cos_from_transfer(p, q, p_prime, g_pq):
    g_t = relative_quantities(p, p_prime)[0]
    return np.clip(1.0 - 2.0 * (g_t / g_pq) ** 2, -1.0, 1.0)


def scattering_angle(p, q, p_prime):
    """Centre-of-momentum scattering angle, ``cos(theta) = 1 - 2 g(p,p')^2 / g(p,q)^2``.

    Raises
    ------
    DegenerateCollisionError
        If ``g(p, q) = 0`` anywhere.
    """
    p = _as_momentum(p)
    q = _as_momentum(q)
    g_pq = relative_quantities(p, q)[0]
    if np.any(g_pq <= 0.0):
        raise DegenerateCollisionError("scattering angle undefined for g(p, q) = 0")
    return _cos_from_transfer(p, q, _as_momentum(p_prime), g_pq)


def cm_direction(p, q):
    """Unit direction ``k`` of ``p`` in the centre-of-momentum frame.

    ``cos(theta) = k . omega`` for the ``omega`` used by :func:`post_collision`.
    """
    p = _as_momentum(p)
    q = _as_momentum(q)
    P, Pn, n, gamma_b, g, s = _boost_frame(p, q)
    coef = (gamma_b - 1.0) * np.einsum("...i,...i->...", p, n) - Pn / np.sqrt(s) * energy(p)
    coef = np.where(Pn < BOOST_EPS, 0.0, coef)
    pc = p + coef[..., None] * n
    nrm = np.sqrt(np.einsum("...i,...i->...", pc, pc))
    if np.any(nrm == 0.0):
        raise DegenerateCollisionError("centre-of-momentum direction undefined for g(p, q) = 0")
    return pc / nrm[..., None]


def maxwellian(p):
    """Normalised relativistic Maxwellian ``exp(-p0) / (4 pi)``."""
    return np.exp(-energy(p)) / (4.0 * np.pi)


def weight(p, l):
    """Momentum weight ``(p0)^l``."""
    return energy(p) ** l
