"""Spectral convergence of J_PL and Q on a wavy channel, with timings.

    python demos/convergence.py [reference M, default 512]
"""

import sys
import time

import numpy as np

from stokespump import SolverConfig, WallShapeParams, build_channel, evaluate, solve_forward
from stokespump.geometry import LOWER, UPPER, parameter_index

N = 5
xi = WallShapeParams.flat(N).xi.copy()
xi[parameter_index(N, UPPER, 2, 1)] = -0.2
xi[parameter_index(N, UPPER, 2, N + 2)] = 0.08
xi[parameter_index(N, LOWER, 2, 1)] = 0.1
xi[parameter_index(N, LOWER, 2, 3)] = -0.05
xi[parameter_index(N, UPPER, 1, N + 1)] = 0.1
xi[parameter_index(N, LOWER, 1, 2)] = -0.05
params = WallShapeParams(N, xi)


def solve(M):
    t0 = time.perf_counter()
    fv = evaluate(solve_forward(build_channel(params, M, 32), SolverConfig(M=M)))
    return fv, time.perf_counter() - t0


M_ref = int(sys.argv[1]) if len(sys.argv) > 1 else 512
ref, _ = solve(M_ref)
print(f"reference M={M_ref}: J_PL={ref.J_PL:.14f}  Q={ref.Q:.14f}\n")
print("   M    err J_PL    err Q     time [s]")
for M in (16, 24, 32, 48, 64, 96, 128):
    fv, dt = solve(M)
    eJ = abs(fv.J_PL - ref.J_PL) / abs(ref.J_PL)
    eQ = abs(fv.Q - ref.Q) / max(abs(ref.Q), np.finfo(float).tiny)
    print(f"{M:4d}   {eJ:9.2e}   {eQ:9.2e}   {dt:7.3f}")
