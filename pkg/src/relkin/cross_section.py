"""Hard-potential scattering kernel and the small-``g`` cutoff."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SingularityError


def validate_params(a, b, gamma):
    """List the violated hard-potential constraints (empty list means admissible).

    The admissible set is ``gamma > -2``, ``0 <= a <= 2 + gamma`` and
    ``0 <= b < min(4, 4 + gamma)``.
    """
    bad = []
    if not gamma > -2.0:
        bad.append("γ > -2")
    if not a >= 0.0:
        bad.append("a ≥ 0")
    if not a <= 2.0 + gamma:
        bad.append("a ≤ 2+γ")
    if not b >= 0.0:
        bad.append("b ≥ 0")
    if not b < min(4.0, 4.0 + gamma):
        bad.append("b < min{4, 4+γ}")
    return bad


@dataclass(frozen=True)
class CrossSection:
    """``sigma(g, theta) = (g^a [+ g^-b]) sin^gamma(theta)``.

    The soft term ``g^-b`` is off unless ``soft_enabled``.  ``chi_epsilon`` is
    the cutoff scale used by the split of the linear operator.
    """

    a: float = 1.0
    b: float = 0.0
    gamma: float = 0.0
    soft_enabled: bool = False
    chi_epsilon: float = 0.1

    def __post_init__(self):
        bad = validate_params(self.a, self.b, self.gamma)
        if bad:
            raise ConfigError("inadmissible cross section: " + ", ".join(bad))
        if not self.chi_epsilon > 0:
            raise ConfigError("chi_epsilon must be positive")

    def radial(self, g):
        """The ``g``-dependent factor ``g^a [+ g^-b]``."""
        g = np.asarray(g, dtype=float)
        out = g**self.a
        if self.soft_enabled:
            if self.b > 0 and np.any(g == 0):
                raise SingularityError("soft term g^-b evaluated at g = 0")
            out = out + g ** (-self.b)
        return out

    def angular(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.gamma == 0:
            return np.ones_like(theta)
        return np.sin(theta) ** self.gamma


def sigma(g, theta, model):
    """Evaluate the scattering kernel of ``model`` at ``(g, theta)``."""
    return model.radial(g) * model.angular(theta)


def chi(g, epsilon):
    """Cubic smoothstep cutoff: 0 for ``g <= eps``, 1 for ``g >= 2 eps``."""
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    u = np.clip((np.asarray(g, dtype=float) - epsilon) / epsilon, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)
