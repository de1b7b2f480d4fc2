"""Flat channel: the forward problem is plug flow, the adjoint is plane Poiseuille.

    python demos/flat_channel.py
"""

import numpy as np

from stokespump import SolverConfig, WallShapeParams, build_channel, eval_field, evaluate, solve_adjoint, solve_forward
from stokespump.periodic_bie import section_flux

h = 1.0
params = WallShapeParams.flat(5, top=h / 2, bottom=-h / 2)
M = 128
geom = build_channel(params, M, 32)
cfg = SolverConfig(M=M)
fwd, adj = solve_forward(geom, cfg), solve_adjoint(geom, cfg)
L = geom.L

fv = evaluate(fwd)
print(f"J_PL = {fv.J_PL:.2e}   Q = {fv.Q:.2e}   V = {fv.V:.6f} (h*L = {h * L:.6f})")

x2 = np.linspace(-0.2, 0.2, 5)
pts = np.column_stack([np.full_like(x2, L / 2), x2])
u, _, _ = eval_field(fwd, pts)
ua, _, _ = eval_field(adj, pts)
exact = (x2 - h / 2) * (x2 + h / 2) / (2 * L)
print("\n   x2      forward u1    adjoint u1    Poiseuille")
for row in zip(x2, u[:, 0], ua[:, 0], exact):
    print("  {:+.2f}   {:+.10f}   {:+.10f}   {:+.10f}".format(*row))

print(f"\nend-section flux {section_flux(adj):+.12f}   exact {-h**3 / (12 * L):+.12f}")
print(f"wall shear f_s    {adj.wall_fs[0, 0]:+.12f}   |exact| {h / (2 * L):.12f}")
