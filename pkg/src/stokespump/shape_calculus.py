"""Adjoint-based shape derivatives of the power loss, flow rate and volume.

Every derivative is a boundary integral of forward and adjoint wall data
against the normal transformation velocity ``theta_n`` and its arclength
derivative, plus an endpoint term for the flow rate.  Directions may be
batched: the ``PerturbationField`` arrays carry a leading axis per direction.
"""

from dataclasses import dataclass

import numpy as np

from .functionals import evaluate
from .geometry import basis_perturbations, build_channel
from .periodic_bie import assemble_system, solve_adjoint, solve_forward


def _wall_data(geom):
    kappa = np.stack([w.kappa for w in geom.walls])
    weights = np.stack([w.weights for w in geom.walls])
    ell = np.array([w.ell for w in geom.walls])
    return kappa, weights, ell


def _dl_star(geom, theta_n):
    kappa, weights, _ = _wall_data(geom)
    return -np.sum(kappa * theta_n * weights, axis=-1)


def grad_CV(geom, theta):
    """``int_Gamma theta_n ds``."""
    _, weights, _ = _wall_data(geom)
    return np.sum(theta.theta_n * weights, axis=(-2, -1))


def grad_JPL(fwd, geom, theta, pressure_offset=0.0):
    kappa, weights, ell = _wall_data(geom)
    c, mu, L = fwd.cfg.c, fwd.cfg.mu, geom.L
    fs = fwd.wall_fs
    p = fwd.wall_pressure + pressure_offset
    tn = theta.theta_n
    dl = _dl_star(geom, tn)[..., None]
    ell_ = ell[:, None]
    integrand = (2.0 * c * ell_ * kappa * fs / L - fs**2 / mu) * tn
    integrand = integrand + (2.0 * c / L) * (dl * fs - ell_ * theta.dtheta_n_ds * p)
    return np.sum(integrand * weights, axis=(-2, -1))


def _endpoint_u1(geom, c):
    """Slip velocity ``u1`` at ``z+`` and ``z-`` (``t = 2 pi``), from the closed form."""
    from .geometry import LOWER, UPPER, frenet, wall_derivatives

    out = []
    for which, wall in ((UPPER, geom.upper), (LOWER, geom.lower)):
        _, dx, ddx = wall_derivatives(geom.params, which, np.array([2.0 * np.pi]))
        _, tau, _, _ = frenet(dx, ddx, which)
        out.append(c * wall.ell / geom.L * tau[0, 0])
    return out


def _ramp_pairing(geom, theta, jump):
    """``int_Gamma (d_s theta_n) (jump x1/L) ds`` per wall, integrated by parts.

    The ramp is not periodic in ``t`` so the trapezoidal rule would lose
    spectral accuracy; after integration by parts only periodic integrands
    and the endpoint value ``theta_n(t = 2 pi)`` remain.
    """
    L = geom.L
    tau1 = np.stack([w.tau[:, 0] for w in geom.walls])
    weights = np.stack([w.weights for w in geom.walls])
    tn = theta.theta_n
    inner = -L * tn[..., 0] - np.sum(tn * tau1 * weights, axis=-1)
    return jump * inner / L


def grad_CQ(fwd, adj, geom, theta):
    """Shape derivative of the flow rate.

    The curvature term carries the adjoint shear ``f^_s``: it comes from
    pairing the adjoint traction with ``theta_n d_n u`` and is required by
    units and by finite differences.
    """
    kappa, weights, ell = _wall_data(geom)
    c, mu, L = fwd.cfg.c, fwd.cfg.mu, geom.L
    fs, fsh = fwd.wall_fs, adj.wall_fs
    x1 = np.stack([w.x[:, 0] for w in geom.walls])
    ph_periodic = adj.wall_pressure - adj.pressure_jump * x1 / L
    tn = theta.theta_n
    dl = _dl_star(geom, tn)[..., None]
    ell_ = ell[:, None]
    integrand = (c * ell_ * kappa * fsh / L - fs * fsh / mu + c / L) * tn
    integrand = integrand + (c / L) * (dl * fsh - ell_ * theta.dtheta_n_ds * ph_periodic)
    ramp = -(c / L) * np.sum(ell * _ramp_pairing(geom, theta, adj.pressure_jump), axis=-1)
    u_plus, u_minus = _endpoint_u1(geom, c)
    ends = theta.theta2_at_zplus * u_plus - theta.theta2_at_zminus * u_minus
    return np.sum(integrand * weights, axis=(-2, -1)) + ramp + ends


@dataclass(frozen=True)
class GradientVector:
    dJ: np.ndarray
    dCQ: np.ndarray
    dCV: np.ndarray


@dataclass(frozen=True)
class GradientResult:
    values: object
    grad: GradientVector
    fwd: object
    adj: object
    geom: object
    solves: int = 2


def full_gradient(params, cfg, Q0=0.0, V0=None):
    """Functionals and their gradients over all ``8N+1`` parameters from two solves.

    One SVD of the block system serves both right-hand sides.
    """
    geom = build_channel(params, cfg.M, cfg.Mp)
    system = assemble_system(geom, cfg)
    fwd = solve_forward(system)
    adj = solve_adjoint(system)
    theta = basis_perturbations(params, geom)
    grad = GradientVector(grad_JPL(fwd, geom, theta), grad_CQ(fwd, adj, geom, theta), grad_CV(geom, theta))
    return GradientResult(evaluate(fwd, geom, Q0, V0), grad, fwd, adj, geom)


def functionals_only(params, cfg, Q0=0.0, V0=None):
    """Forward solve and functional values; used by finite-difference checks."""
    geom = build_channel(params, cfg.M, cfg.Mp)
    return evaluate(solve_forward(geom, cfg), geom, Q0, V0)


def fd_step(xi_k, base=1e-5):
    return base * max(1.0, abs(xi_k))


def finite_difference_gradient(params, cfg, indices=None, base=1e-5):
    """Central differences of ``(J_PL, Q, V)`` per parameter; returns an array ``(n, 3)``."""
    indices = range(params.size) if indices is None else indices
    rows = []
    for k in indices:
        h = fd_step(params.xi[k], base)
        vals = []
        for sgn in (1.0, -1.0):
            xi = params.xi.copy()
            xi[k] += sgn * h
            fv = functionals_only(params.with_xi(xi), cfg)
            vals.append(np.array([fv.J_PL, fv.Q, fv.V]))
        rows.append((vals[0] - vals[1]) / (2.0 * h))
    return np.array(rows)
