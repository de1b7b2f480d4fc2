"""Two different starting shapes, same targets: both runs reach the same pump.

Takes about 2 minutes.

    python demos/two_start.py
"""

import numpy as np

from stokespump import OptimizerConfig, SolverConfig, build_channel, solve_constrained
from stokespump.geometry import shape_distance
from stokespump.optimizer import random_top_wall, symmetric_bump
from stokespump.shape_calculus import functionals_only

cfg = SolverConfig(M=64)
rand = random_top_wall(5, np.random.default_rng(2), 0.5)
target = functionals_only(rand, cfg)
print(f"targets from the random start: Q* = {target.Q:.6f}, V* = {target.V:.6f}\n")

runs = {}
for name, start in (("random top", rand), ("bump", symmetric_bump(5, 0.4))):
    res = solve_constrained(start, target.Q, target.V, cfg, OptimizerConfig())
    runs[name] = res
    fv = res.values
    print(f"{name:>10}: J_PL={fv.J_PL:.6f}  C_Q={fv.C_Q:+.1e}  C_V={fv.C_V:+.1e}  "
          f"outer={res.state.m}  solves={res.solves}  converged={res.converged}")

a, b = runs.values()
ga, gb = build_channel(a.params, 64, 32), build_channel(b.params, 64, 32)
gap = max(np.max(np.abs(wa.x - wb.x)) for wa, wb in zip(ga.walls, gb.walls))
print(f"\nrelative J_PL difference {abs(a.values.J_PL - b.values.J_PL) / a.values.J_PL:.1e}")
print(f"largest nodal wall distance {gap:.1e}  (the optima sit at different offsets)")
print(f"wall distance up to translation {shape_distance(a.params, b.params):.1e}")
