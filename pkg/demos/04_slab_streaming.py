"""
Free streaming and collisions on a periodic slab
================================================

Transport in ``x`` is handled along exact characteristics.  Without
collisions a localised perturbation disperses: the mass seen at any point
decreases.  Collisions then damp the perturbation towards equilibrium.
"""

import numpy as np

from relkin import diagnostics as dg
from relkin.grid import SpatialGrid
from relkin.operators import build_workspace
from relkin.solver import SolverConfig, solve_slab

ws = build_workspace(pmax=8, n=9, n_theta=4, n_phi=8)
g = ws.grid
space = SpatialGrid(20.0, 64)
profile = np.exp(-0.5 * ((space.x - 10.0) / 1.0) ** 2)
f0 = 0.05 * profile[:, None] * g.sqrtJ[None, :]

for collisions in ("off", "full"):
    cfg = SolverConfig(dt=0.1, t_max=2.0, collisions=collisions, cadence=5)
    s = solve_slab(ws, f0, space, cfg)
    print(f"collisions {collisions}:")
    for t, m, n in zip(s.times, s.column("sup_x_mass"), s.column("norm_l2x")):
        print(f"  t = {t:3.1f}  sup_x mass = {m:.4e}  sup_p L2_x = {n:.4e}")

# the same dispersion seen through the characteristics of the initial datum
print([round(dg.characteristics_mass(f0, 8.0, t, 10.0, g, space), 5) for t in (0, 2, 4, 8)])
