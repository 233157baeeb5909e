"""Momentum lattice, sphere quadrature, periodic slab and field containers."""

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import ConfigError, UsageError
from .kinematics import energy, maxwellian


@dataclass(frozen=True, eq=False)
class MomentumGrid:
    """Uniform Cartesian lattice on ``[-pmax, pmax]^3`` with trapezoid weights.

    Nodes are flattened in C order: ``index = (ix * n + iy) * n + iz``.
    """

    pmax: float
    n: int

    def __post_init__(self):
        if not self.pmax > 0:
            raise ConfigError("grid.pmax must be positive")
        if int(self.n) != self.n or self.n < 4:
            raise ConfigError("grid.n must be an integer >= 4")

    @property
    def h(self):
        return 2.0 * self.pmax / (self.n - 1)

    @property
    def size(self):
        return self.n**3

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @cached_property
    def axis(self):
        # centred construction keeps the lattice exactly symmetric under p -> -p
        return self.h * (np.arange(self.n) - 0.5 * (self.n - 1))

    @cached_property
    def points(self):
        X, Y, Z = np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    @cached_property
    def weights(self):
        w1 = np.full(self.n, self.h)
        w1[[0, -1]] *= 0.5
        return np.einsum("i,j,k->ijk", w1, w1, w1).ravel()

    @cached_property
    def p0(self):
        return energy(self.points)

    @cached_property
    def J(self):
        return maxwellian(self.points)

    @cached_property
    def sqrtJ(self):
        return np.sqrt(self.J)

    def index(self, ix, iy, iz):
        return (ix * self.n + iy) * self.n + iz

    def nearest_index(self, p):
        """Flat index of the lattice node closest to ``p``."""
        i = np.clip(np.rint((np.asarray(p, dtype=float) + self.pmax) / self.h), 0, self.n - 1)
        i = i.astype(int)
        return self.index(i[..., 0], i[..., 1], i[..., 2])

    def sample(self, func):
        """Evaluate ``func(points)`` on the lattice."""
        return np.asarray(func(self.points), dtype=float)

    @cached_property
    def symmetry_maps(self):
        """Index permutations for the 48 signed axis permutations of the cube.

        ``maps[k][i]`` is the flat index of ``R_k p_i``; the identity is ``maps[0]``.
        """
        n = self.n
        idx = np.indices(self.shape).reshape(3, -1)
        maps = []
        for perm in itertools.permutations(range(3)):
            for signs in itertools.product((1, -1), repeat=3):
                c = []
                for axis in range(3):
                    ii = idx[perm[axis]]
                    c.append(ii if signs[axis] > 0 else n - 1 - ii)
                maps.append((c[0] * n + c[1]) * n + c[2])
        return np.array(maps)


def build_momentum_grid(pmax, n):
    return MomentumGrid(float(pmax), int(n))


@dataclass(frozen=True, eq=False)
class AngularQuadrature:
    """Product rule on the unit sphere about a polar axis.

    ``cos_theta`` holds Gauss-Legendre (or Gauss-Jacobi) nodes, ``phi`` the
    uniform azimuths and ``weights`` the flattened ``(n_theta, n_phi)`` product
    weights.  In Jacobi mode the ``sin^gamma(theta)`` factor is part of the
    weights (``absorbs_sin_gamma``), so they sum to ``2 pi int (1-x^2)^(gamma/2) dx``
    rather than ``4 pi``.
    """

    cos_theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    gamma: float = 0.0
    absorbs_sin_gamma: bool = False

    @property
    def size(self):
        return self.weights.size

    @cached_property
    def sin_theta(self):
        return np.sqrt(np.maximum(1.0 - self.cos_theta**2, 0.0))

    @cached_property
    def flat(self):
        """Per-node ``(cos theta, sin theta, cos phi, sin phi)`` in ``(theta, phi)`` order."""
        ct = np.repeat(self.cos_theta, self.phi.size)
        st = np.repeat(self.sin_theta, self.phi.size)
        cp = np.tile(np.cos(self.phi), self.cos_theta.size)
        sp = np.tile(np.sin(self.phi), self.cos_theta.size)
        return ct, st, cp, sp

    @cached_property
    def kernel_weights(self):
        """Weights multiplied by the angular kernel factor ``sin^gamma``."""
        if self.absorbs_sin_gamma or self.gamma == 0:
            return self.weights.copy()
        return self.weights * self.flat[1] ** self.gamma

    def nodes(self, axis=(0.0, 0.0, 1.0), reference=None):
        """Unit vectors of the rule with polar axis ``axis``.

        The azimuth origin is ``reference`` projected off the axis; by default the
        lab axis least aligned with ``axis``.
        """
        k = np.asarray(axis, dtype=float)
        k = k / np.linalg.norm(k)
        e1 = None
        if reference is not None:
            v = np.asarray(reference, dtype=float)
            v = v - (v @ k) * k
            if np.linalg.norm(v) > 1e-10:
                e1 = v / np.linalg.norm(v)
        if e1 is None:
            m = int(np.argmin(np.abs(k)))
            v = np.eye(3)[m] - k[m] * k
            e1 = v / np.linalg.norm(v)
        e2 = np.cross(k, e1)
        ct, st, cp, sp = self.flat
        return ct[:, None] * k + (st * cp)[:, None] * e1 + (st * sp)[:, None] * e2

    def integrate(self, values):
        return float(np.sum(self.weights * values))


def build_angular_quadrature(n_theta, n_phi, gamma=0.0, jacobi=False):
    """Gauss-Legendre (or Gauss-Jacobi) in ``cos theta`` times a uniform azimuth rule."""
    if int(n_theta) != n_theta or n_theta < 2:
        raise ConfigError("grid.ntheta must be an integer >= 2")
    if int(n_phi) != n_phi or n_phi < 4:
        raise ConfigError("grid.nphi must be an integer >= 4")
    n_theta, n_phi = int(n_theta), int(n_phi)
    if jacobi:
        if not gamma > -2:
            raise ConfigError("Jacobi mode needs gamma > -2")
        x, w = roots_jacobi(n_theta, gamma / 2.0, gamma / 2.0)
    else:
        x, w = roots_legendre(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    weights = np.outer(w, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel()
    return AngularQuadrature(x, phi, weights, float(gamma), bool(jacobi))


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Periodic slab ``[0, X)`` with ``nx`` uniform points."""

    X: float
    nx: int

    def __post_init__(self):
        if not self.X > 0:
            raise ConfigError("slab.X must be positive")
        if int(self.nx) != self.nx or self.nx < 1:
            raise ConfigError("slab.nx must be an integer >= 1")

    @property
    def dx(self):
        return self.X / self.nx

    @cached_property
    def x(self):
        return self.dx * np.arange(self.nx)


@dataclass(eq=False)
class DistributionField:
    """Values of ``f``, ``F``, ``h`` or a Fourier mode on a momentum lattice.

    ``values`` has shape ``(grid.size,)`` in homogeneous mode and
    ``(space.nx, grid.size)`` when a spatial slab is attached.
    """

    grid: MomentumGrid
    values: np.ndarray
    space: SpatialGrid = None
    kind: str = "f"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if not np.iscomplexobj(self.values):
            self.values = self.values.astype(float, copy=False)
        nx = 1 if self.space is None else self.space.nx
        expected = (self.grid.size,) if self.space is None else (nx, self.grid.size)
        if self.values.shape != expected:
            raise UsageError(f"field shape {self.values.shape} does not match {expected}")
        if not np.all(np.isfinite(self.values)):
            raise UsageError("field values must be finite")

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    @classmethod
    def from_function(cls, grid, func, kind="f"):
        return cls(grid, grid.sample(func), kind=kind)


def _values(field_or_array):
    if isinstance(field_or_array, DistributionField):
        return field_or_array.values
    return np.asarray(field_or_array)


def _trilinear(grid, u, pts):
    # u: (..., N) values; pts: (M, 3).  Returns (..., M); zero outside the box.
    n, h, pmax = grid.n, grid.h, grid.pmax
    f = (pts + pmax) / h
    inside = np.all((f >= -1e-12) & (f <= n - 1 + 1e-12), axis=1)
    f = np.clip(f, 0.0, n - 1)
    i = np.minimum(np.floor(f).astype(int), n - 2)
    t = f - i
    u3 = u.reshape(u.shape[:-1] + (n, n, n))
    ix, iy, iz = i[:, 0], i[:, 1], i[:, 2]
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]

    def corner(dx, dy, dz):
        return u3[..., ix + dx, iy + dy, iz + dz]

    def lerp(a, b, s):
        return a + s * (b - a)

    c00 = lerp(corner(0, 0, 0), corner(0, 0, 1), tz)
    c01 = lerp(corner(0, 1, 0), corner(0, 1, 1), tz)
    c10 = lerp(corner(1, 0, 0), corner(1, 0, 1), tz)
    c11 = lerp(corner(1, 1, 0), corner(1, 1, 1), tz)
    c0 = lerp(c00, c01, ty)
    c1 = lerp(c10, c11, ty)
    out = lerp(c0, c1, tx)
    return np.where(inside, out, 0.0)


def interpolate(field, p):
    """Trilinear interpolation of a field at momenta ``p``; zero outside the box.

    For a slab field the result carries the spatial axis first.
    """
    if not isinstance(field, DistributionField):
        raise UsageError("interpolate expects a DistributionField")
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    out = _trilinear(field.grid, field.values, pts)
    if np.ndim(p) == 1:
        out = out[..., 0]
    return out


_PHI = {
    "1": lambda pts: np.ones(len(pts)),
    "px": lambda pts: pts[:, 0],
    "py": lambda pts: pts[:, 1],
    "pz": lambda pts: pts[:, 2],
    "p0": energy,
}

INVARIANTS = ("1", "px", "py", "pz", "p0")


def test_function(grid, phi):
    """Lattice values of a named test function, a callable, or an explicit array."""
    if isinstance(phi, str):
        try:
            return _PHI[phi](grid.points)
        except KeyError:
            raise UsageError(f"unknown test function {phi!r}") from None
    if callable(phi):
        return np.asarray(phi(grid.points), dtype=float)
    return np.asarray(phi, dtype=float)


def moment(field, phi, grid=None, space=None):
    """Quadrature of ``field * phi`` over momentum (and over ``x`` for slab fields).

    Homogeneous fields give densities per unit volume.
    """
    if isinstance(field, DistributionField):
        grid, space, vals = field.grid, field.space, field.values
    else:
        vals = np.asarray(field)
        if grid is None:
            raise UsageError("moment of a raw array needs the grid")
    ph = test_function(grid, phi)
    w = grid.weights * ph
    if vals.ndim == 1:
        return vals @ w
    total = vals @ w
    dx = 1.0 if space is None else space.dx
    return total.sum() * dx
