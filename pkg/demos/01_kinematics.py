"""
Binary collisions and the relative momentum
===========================================

Post-collision momenta are parameterised by a direction on the unit sphere
in the centre-of-momentum frame.  Energy and momentum are conserved exactly
up to rounding, and the relative momentum ``g`` is squeezed between
``|p-q| / sqrt(p0 q0)`` and ``|p-q|``.
"""

import numpy as np

from relkin import diagnostics as dg
from relkin.kinematics import energy, post_collision, relative_quantities

rng = np.random.default_rng(0)

# A head-on pair scattered through a right angle
out = post_collision([1.0, 0, 0], [-1.0, 0, 0], [0.0, 0, 1])
print("p' =", out.p_prime, " q' =", out.q_prime, " cos(theta) =", out.cos_theta)

# Conservation over many random collisions
n = 100_000
p = rng.uniform(-20, 20, (n, 3))
q = rng.uniform(-20, 20, (n, 3))
om = rng.standard_normal((n, 3))
om /= np.linalg.norm(om, axis=1, keepdims=True)
out = post_collision(p, q, om)
scale = energy(p) + energy(q)
print("max momentum residual:", np.max(np.linalg.norm(out.p_prime + out.q_prime - p - q, axis=1) / scale))
print("max energy residual:  ", np.max(np.abs(energy(out.p_prime) + energy(out.q_prime) - scale) / scale))

# g, s and the flux factor for a reference pair
g, s, v = relative_quantities([1.0, 0, 0], [0.0, 0, 0])
print(f"g = {g:.5f}  s = {s:.5f}  vphi = {v:.5f}")

# Two-sided bounds on g and the weight-exchange constant
rep = dg.inequality_suite(n_samples=n, seed=1)
for row in rep.rows:
    print("  ", row)
