"""Power loss, flow rate and volume of a solved wave-frame flow."""

from dataclasses import dataclass

import numpy as np

from .periodic_bie import section_flux


@dataclass(frozen=True)
class FunctionalValues:
    J_PL: float
    Q: float
    V: float
    C_Q: float = 0.0
    C_V: float = 0.0

    def with_targets(self, Q0, V0):
        C_Q, C_V = constraint_values(self, Q0, V0)
        return FunctionalValues(self.J_PL, self.Q, self.V, C_Q, C_V)


def power_loss(fwd, geom=None, pressure_offset=0.0):
    """``J_PL = int_Gamma f . (u^D + c e1) ds``.

    ``pressure_offset`` adds a constant to the wall pressure first; the result
    does not depend on it because ``u^D + c e1`` is tangent-plus-constant.
    """
    geom = geom or fwd.geom
    c = fwd.cfg.c
    total = 0.0
    for k, wall in enumerate(geom.walls):
        f = fwd.wall_traction[k] - pressure_offset * wall.n
        v = fwd.wall_velocity[k] + np.array([c, 0.0])
        total += wall.integrate(np.einsum("jk,jk->j", f, v))
    return float(total)


def flow_rate(fwd, geom=None):
    """Mean flow rate per wavelength ``int_{Gamma_L} u1 dx2 + c |Omega| / L``."""
    geom = geom or fwd.geom
    return float(section_flux(fwd) + fwd.cfg.c * geom.volume / geom.L)


def constraint_values(fv, Q0, V0):
    return fv.Q - Q0, fv.V - V0


def evaluate(fwd, geom=None, Q0=0.0, V0=None):
    """All three functionals; ``V0`` defaults to the current volume."""
    geom = geom or fwd.geom
    fv = FunctionalValues(power_loss(fwd, geom), flow_rate(fwd, geom), geom.volume)
    return fv.with_targets(Q0, geom.volume if V0 is None else V0)
