"""
Successive approximations of the mild form
==========================================

The local existence argument iterates a linear problem whose loss rate is
frozen at the previous iterate.  For small data the successive differences
contract geometrically.
"""

import numpy as np

from relkin.operators import build_workspace
from relkin.solver import picard_iterate, step_homogeneous

ws = build_workspace(pmax=8, n=9, n_theta=4, n_phi=8)
g = ws.grid
f0 = g.sqrtJ * (1 + 0.5 * g.points[:, 0] / g.p0)
f0 *= 0.1 / np.abs(f0).max()

rep = picard_iterate(ws, f0, t_star=0.1, n_max=10)
for n, (d, r) in enumerate(zip(rep.differences, np.append(rep.ratios, np.nan))):
    print(f"n = {n}  d_n = {d:.3e}  d_n+1/d_n = {r:.3f}")
print("converged:", rep.converged, " diverged:", rep.diverged)

# compare the last iterate with the exponential integrator on the same lattice
f = f0
dt = rep.times[1] - rep.times[0]
for _ in range(len(rep.times) - 1):
    f = step_homogeneous(ws, f, dt)
print("terminal relative gap:", np.abs(rep.iterates[-1][-1] - f).max() / np.abs(f).max())
