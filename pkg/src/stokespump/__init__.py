"""Shape optimization of 2D Stokesian peristaltic pumps.

A periodized single-layer boundary integral solver supplies wall tractions
for a wave-frame forward problem and a pressure-driven adjoint problem.
Adjoint shape derivatives of the power loss and the flow rate feed an
augmented Lagrangian optimizer with BFGS inner iterations.
"""

from .functionals import FunctionalValues, constraint_values, evaluate, flow_rate, power_loss
from .geometry import (
    ChannelGeometry,
    DiscretizedWall,
    GeometryError,
    PerturbationField,
    WallShapeParams,
    basis_perturbation,
    basis_perturbations,
    build_channel,
    channel_volume,
    discretize_wall,
    dl_star,
    eval_wall,
    parameter_index,
)
from .io import load_shape, save_shape
from .optimizer import OptimizerConfig, OptState, augmented_lagrangian_value, bfgs_minimize, solve_constrained
from .periodic_bie import (
    FlowSolution,
    SolverConfig,
    SolverError,
    assemble_system,
    eval_field,
    solve_adjoint,
    solve_forward,
    wall_traction,
)
from .shape_calculus import GradientVector, full_gradient, grad_CQ, grad_CV, grad_JPL

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
