import logging

import numpy as np
import pytest

from stokespump import SolverConfig, WallShapeParams, build_channel, solve_adjoint, solve_forward
from stokespump.geometry import LOWER, UPPER, parameter_index
from stokespump.optimizer import random_top_wall, symmetric_bump

logging.getLogger("stokespump").setLevel(logging.ERROR)


def wavy_shape(N=5):
    """Smooth two-wall test shape with x1 and x2 modes on both walls."""
    xi = np.zeros(8 * N + 1)
    xi[4 * N] = 1.0
    xi[parameter_index(N, UPPER, 2, 1)] = -0.2
    xi[parameter_index(N, UPPER, 2, N + 2)] = 0.08
    xi[parameter_index(N, LOWER, 2, 1)] = 0.1
    xi[parameter_index(N, LOWER, 2, 3)] = -0.05
    xi[parameter_index(N, UPPER, 1, N + 1)] = 0.1
    xi[parameter_index(N, LOWER, 1, 2)] = -0.05
    return WallShapeParams(N, xi)


SHAPES = {
    "wavy": wavy_shape,
    "bump": lambda: symmetric_bump(5, 0.4),
    "random": lambda: random_top_wall(5, np.random.default_rng(1), 0.3),
}


@pytest.fixture
def cfg():
    return SolverConfig(M=64)


@pytest.fixture
def flat():
    return WallShapeParams.flat(5, top=0.5, bottom=-0.5)


@pytest.fixture
def flat_solutions(flat, cfg):
    geom = build_channel(flat, cfg.M, cfg.Mp)
    return geom, solve_forward(geom, cfg), solve_adjoint(geom, cfg)


@pytest.fixture(scope="session")
def wavy_solutions():
    cfg = SolverConfig(M=64)
    geom = build_channel(wavy_shape(), cfg.M, cfg.Mp)
    return geom, solve_forward(geom, cfg), solve_adjoint(geom, cfg)
