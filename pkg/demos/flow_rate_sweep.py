"""Optimal pumping cost against prescribed flow rate, bottom wall held flat.

Each flow rate starts from the previous optimum.  For the larger flow rates
the wave-frame velocity on the centerline turns positive under the crest,
which marks a trapped bolus.  Takes about a minute.

    python demos/flow_rate_sweep.py
"""

import numpy as np

from stokespump import OptimizerConfig, SolverConfig, WallShapeParams, build_channel, eval_field, solve_constrained
from stokespump import solve_forward
from stokespump.geometry import UPPER, parameter_index
from stokespump.optimizer import lower_wall_frozen_mask

N = 5
cfg = SolverConfig(M=64)
mask = lower_wall_frozen_mask(N)
V0 = 4 * np.pi
xi = WallShapeParams.flat(N).xi.copy()
xi[parameter_index(N, UPPER, 2, 1)] = -0.3
bumped = WallShapeParams(N, xi)

print("  Q0     J_PL      solves  max centerline u1")
prev = None
for Q0 in (0.0, 0.3, 0.6, 0.9, 1.2):
    start = WallShapeParams.flat(N) if Q0 == 0 else (prev or bumped)
    res = solve_constrained(start, Q0, V0, cfg, OptimizerConfig(), mask=mask)
    if Q0 > 0:
        prev = res.params
    geom = build_channel(res.params, cfg.M, cfg.Mp)
    fwd = solve_forward(geom, cfg)
    # mid-gap line, kept clear of both walls
    x1 = np.linspace(0, geom.L, 64, endpoint=False)
    top = np.interp(x1, *geom.walls[0].x[np.argsort(geom.walls[0].x[:, 0])].T, period=geom.L)
    pts = np.column_stack([x1, 0.5 * (top - 1.0)])
    u, _, near = eval_field(fwd, pts)
    umax = np.max(u[~near, 0]) if (~near).any() else float("nan")
    print(f"{Q0:4.1f}  {res.values.J_PL:9.5f}  {res.solves:6d}  {umax:+.4f}")
