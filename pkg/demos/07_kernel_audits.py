"""
Kernel decay and the inequality audits
======================================

The reduced kernel of ``K`` decays exponentially away from the diagonal,
the weighted gain row sums fall below ``nu`` at large momenta, and the
small-relative-momentum part of ``K`` vanishes as the cutoff shrinks.
"""

import numpy as np

from relkin import diagnostics as dg
from relkin.operators import build_workspace

ws = build_workspace(pmax=8, n=13, n_theta=4, n_phi=8, form="direct")
g = ws.grid

slope, r2, dist, vals = dg.probe_decay(ws, direction=(1, 1, 1))
print(f"probe along the diagonal: log-slope {slope:.3f}, R^2 {r2:.3f}")

ratio = dg.gain_ratio_profile(ws, [5, 10, 20, 40])
print("gain row sum / nu at p0 = 5, 10, 20, 40:", np.round(ratio, 4))

h = g.sqrtJ * (1 + 0.3 * g.points[:, 0] / g.p0)
c, env = dg.small_g_envelope(ws, h)
print(f"1-chi envelope for eps = 0.4, 0.2, 0.1, 0.05 (c = {c:.3f}):", env)
