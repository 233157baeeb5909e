"""
The discrete collision operator
===============================

A workspace bundles the momentum lattice, the sphere rule and the kernel.
The collision frequency grows like ``(p0)^(a/2)``, the Maxwellian is an
equilibrium and the linearised operator annihilates the collision
invariants up to quadrature error.
"""

import numpy as np

from relkin import diagnostics as dg
from relkin import grid as gr
from relkin.cross_section import CrossSection
from relkin.operators import build_workspace

ws = build_workspace(pmax=8, n=13, n_theta=4, n_phi=8, form="direct")
g = ws.grid
nu = ws.eval_nu()
print(f"nu on the lattice: min {nu.min():.3f}, max {nu.max():.3f}")

# Large-momentum growth of nu for two hard-potential exponents
for a in (1.0, 2.0):
    wsa = build_workspace(8, 13, 4, 8, model=CrossSection(a=a))
    slope, _, _ = dg.nu_slope(wsa)
    print(f"a = {a}: log-log slope of nu vs p0 = {slope:.3f} (expected {a / 2})")

# The Maxwellian is an equilibrium of the discrete operator
Q = ws.eval_Q(g.J)
print("max |Q(J,J)| =", np.abs(Q).max())

# Null space of the linearisation nu - K
for phi in gr.INVARIANTS:
    h = g.sqrtJ * gr.test_function(g, phi)
    res = np.abs(nu * h - ws.eval_K(h)).max() / np.abs(nu * h).max()
    print(f"null-space residual for {phi:>2}: {res:.2e}")

# The conservative form keeps the mass of Q(F,F) at rounding level
wsc = build_workspace(8, 13, 4, 8)
F = g.J * (1 + 0.3 * np.exp(-0.5 * ((g.points[:, 0] - 1) ** 2 + g.points[:, 1] ** 2 + g.points[:, 2] ** 2)))
QF = wsc.eval_Q(F)
print("moments of Q(F,F):", [f"{gr.moment(QF, phi, g):.2e}" for phi in gr.INVARIANTS])
