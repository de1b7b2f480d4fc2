"""Augmented Lagrangian outer loop with a BFGS inner solver.

The augmented Lagrangian is

    L_A = J - lam1 C_Q - lam2 C_V + sigma1/2 C_Q^2 + sigma2/2 C_V^2.

Index 1 refers to the flow-rate constraint and index 2 to the volume
constraint throughout, for multipliers, penalties and tolerances alike.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .functionals import evaluate
from .geometry import GeometryError, basis_perturbations, build_channel
from .periodic_bie import SolverError, assemble_system, solve_adjoint, solve_forward
from .shape_calculus import GradientVector, grad_CQ, grad_CV, grad_JPL

log = logging.getLogger(__name__)

LOG_COLUMNS = ("m", "j", "J_PL", "C_Q", "C_V", "grad_inf", "L_A", "step", "solves")


@dataclass(frozen=True)
class OptimizerConfig:
    zeta_star: float = 1e-3
    sigma0: tuple = (10.0, None)
    max_outer: int = 20
    max_inner: int = 50
    gtol: float = 1e-4
    armijo_c1: float = 1e-4
    max_halvings: int = 30
    warm_start: bool = True
    max_step: float = 0.5
    lambda0: str = "least-squares"

    def __post_init__(self):
        if self.zeta_star <= 0 or self.gtol <= 0:
            raise ValueError("tolerances must be positive")
        if self.lambda0 not in ("zero", "least-squares"):
            raise ValueError("lambda0 must be 'zero' or 'least-squares'")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be at least 1")


@dataclass
class OptState:
    lam: np.ndarray
    sigma: np.ndarray
    sigma0: np.ndarray
    zeta: np.ndarray
    zeta_star: float = 1e-3
    m: int = 0
    history: list = field(default_factory=list)
    transcript: list = field(default_factory=list)
    log: list = field(default_factory=list)
    converged: bool = False

    @classmethod
    def initial(cls, sigma0, zeta_star=1e-3):
        sigma0 = np.asarray(sigma0, dtype=float)
        if np.any(sigma0 <= 0):
            raise ValueError("penalties must be positive")
        return cls(np.zeros(2), sigma0.copy(), sigma0.copy(), sigma0 ** -0.1, zeta_star)


def augmented_lagrangian_value(fv, state):
    lam, sig = state.lam, state.sigma
    return float(fv.J_PL - lam[0] * fv.C_Q - lam[1] * fv.C_V + 0.5 * sig[0] * fv.C_Q**2 + 0.5 * sig[1] * fv.C_V**2)


def augmented_lagrangian_gradient(fv, grad, state):
    lam, sig = state.lam, state.sigma
    return grad.dJ + (sig[0] * fv.C_Q - lam[0]) * grad.dCQ + (sig[1] * fv.C_V - lam[1]) * grad.dCV


class Evaluator:
    """Forward/adjoint solves at design vectors, with a one-entry cache and solve counters."""

    def __init__(self, params, cfg, Q0, V0):
        self.params = params
        self.cfg = cfg
        self.Q0, self.V0 = Q0, V0
        self.forward_solves = 0
        self.adjoint_solves = 0
        self._cache = None

    @property
    def solves(self):
        return self.forward_solves + self.adjoint_solves

    def _key(self, xi):
        return np.asarray(xi, dtype=float).tobytes()

    def values(self, xi):
        """Functional values, or ``None`` if the shape is geometrically invalid."""
        key = self._key(xi)
        if self._cache is not None and self._cache["key"] == key:
            return self._cache["fv"]
        params = self.params.with_xi(xi)
        try:
            geom = build_channel(params, self.cfg.M, self.cfg.Mp)
            system = assemble_system(geom, self.cfg)
            fwd = solve_forward(system)
        except (GeometryError, SolverError) as exc:
            log.debug("rejected trial shape: %s", exc)
            return None
        self.forward_solves += 1
        fv = evaluate(fwd, geom, self.Q0, self.V0)
        if fv.J_PL < -1e-8 * max(1.0, abs(fv.Q)):
            # power loss is a(u, u) >= 0; a negative value means the shape is unresolved
            log.debug("rejected trial shape: negative power loss %g", fv.J_PL)
            return None
        self._cache = {"key": key, "fv": fv, "params": params, "geom": geom, "system": system, "fwd": fwd, "grad": None}
        return fv

    def gradient(self, xi):
        fv = self.values(xi)
        if fv is None:
            raise GeometryError("gradient requested at an invalid shape")
        c = self._cache
        if c["grad"] is None:
            adj = solve_adjoint(c["system"])
            self.adjoint_solves += 1
            theta = basis_perturbations(c["params"], c["geom"])
            c["grad"] = GradientVector(
                grad_JPL(c["fwd"], c["geom"], theta),
                grad_CQ(c["fwd"], adj, c["geom"], theta),
                grad_CV(c["geom"], theta),
            )
        return fv, c["grad"]


def _transcript_row(m, branch, state):
    return (m, branch, *(float(v) for v in (*state.lam, *state.sigma, *state.zeta)))


def _record(state, j, fv, g, value, step, solves):
    row = (state.m, j, fv.J_PL, fv.C_Q, fv.C_V, float(np.max(np.abs(g))), value, step, solves)
    state.log.append(row)
    return row


def bfgs_minimize(xi0, state, evaluator, opt, mask=None, B0=None):
    """Minimize ``L_A`` over the free entries of ``xi`` with Armijo-backtracked BFGS.

    Returns ``(xi, info)``; ``info`` holds the final Hessian approximation,
    the inner iteration count and whether the line search failed.
    """
    xi = np.array(xi0, dtype=float)
    free = np.ones(xi.size, bool) if mask is None else np.asarray(mask, bool)
    fv, grad = evaluator.gradient(xi)
    value = augmented_lagrangian_value(fv, state)
    g = augmented_lagrangian_gradient(fv, grad, state)[free]
    if B0 is None:
        B = np.eye(free.sum()) * max(np.linalg.norm(g), 1e-12)
    else:
        B = np.array(B0)
    _record(state, 0, fv, g, value, 0.0, evaluator.solves)
    info = {"line_search_failed": False, "iterations": 0}
    for j in range(1, opt.max_inner + 1):
        if np.max(np.abs(g)) <= opt.gtol * max(1.0, abs(value)):
            break
        p = -np.linalg.solve(B, g)
        slope = float(g @ p)
        if slope >= 0.0:
            # lost descent: restart from a scaled identity
            B = np.eye(free.sum()) * max(np.linalg.norm(g), 1e-12)
            p = -g / B[0, 0]
            slope = float(g @ p)
        eta = min(1.0, opt.max_step / max(np.max(np.abs(p)), 1e-300))
        accepted = None
        for _ in range(opt.max_halvings):
            trial = xi.copy()
            trial[free] += eta * p
            tv = evaluator.values(trial)
            if tv is not None:
                tval = augmented_lagrangian_value(tv, state)
                if tval <= value + opt.armijo_c1 * eta * slope:
                    accepted = trial
                    break
            eta *= 0.5
        if accepted is None:
            info["line_search_failed"] = True
            log.warning("line search failed at outer %d inner %d", state.m, j)
            break
        fv, grad = evaluator.gradient(accepted)
        new_value = augmented_lagrangian_value(fv, state)
        g_new = augmented_lagrangian_gradient(fv, grad, state)[free]
        s = accepted[free] - xi[free]
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            Bs = B @ s
            B = B - np.outer(Bs, Bs) / float(s @ Bs) + np.outer(y, y) / sy
        xi, g, value = accepted, g_new, new_value
        info["iterations"] = j
        _record(state, j, fv, g, value, eta, evaluator.solves)
    info["B"] = B
    info["fv"] = fv
    info["grad_inf"] = float(np.max(np.abs(g)))
    return xi, info


def multiplier_estimate(grad, mask=None):
    """First-order multipliers: least-squares fit of ``dJ`` by ``(dCQ, dCV)``."""
    free = slice(None) if mask is None else np.asarray(mask, bool)
    A = np.column_stack([grad.dCQ[free], grad.dCV[free]])
    lam, *_ = np.linalg.lstsq(A, grad.dJ[free], rcond=None)
    return lam


def initial_sigma(opt, C_V, V0):
    s1, s2 = opt.sigma0
    if s2 is None:
        s2 = 100.0 if abs(C_V) > 0.1 * abs(V0) else 10.0
    return (float(s1), float(s2))


@dataclass
class OptimizationResult:
    params: object
    state: OptState
    values: object
    forward_solves: int
    adjoint_solves: int

    @property
    def converged(self):
        return self.state.converged

    @property
    def solves(self):
        return self.forward_solves + self.adjoint_solves


def solve_constrained(start, Q0, V0, cfg, opt=None, mask=None, evaluator=None):
    """Augmented Lagrangian: alternate BFGS subproblem solves with multiplier or penalty updates.

    ``evaluator`` replaces the BIE-backed :class:`Evaluator`; anything with
    ``values``, ``gradient`` and solve counters works.
    """
    opt = opt or OptimizerConfig()
    ev = evaluator or Evaluator(start, cfg, Q0, V0)
    fv0 = ev.values(start.xi)
    if fv0 is None:
        raise GeometryError("initial shape is invalid")
    state = OptState.initial(initial_sigma(opt, fv0.C_V, V0), opt.zeta_star)
    if opt.lambda0 == "least-squares":
        state.lam = multiplier_estimate(ev.gradient(start.xi)[1], mask)
    state.transcript.append(_transcript_row(0, "init", state))
    xi = start.xi.copy()
    B = None
    best = None
    for m in range(1, opt.max_outer + 1):
        state.m = m
        xi, info = bfgs_minimize(xi, state, ev, opt, mask, B if opt.warm_start else None)
        B = info["B"]
        fv = info["fv"]
        cq, cv = abs(fv.C_Q), abs(fv.C_V)
        if best is None or max(cq, cv) < max(abs(best[1].C_Q), abs(best[1].C_V)):
            best = (xi.copy(), fv)
        state.history.append((xi.copy(), fv.J_PL, fv.C_Q, fv.C_V, info["grad_inf"], info["iterations"]))
        if cq < state.zeta[0] and cv < state.zeta[1]:
            if cq < opt.zeta_star and cv < opt.zeta_star:
                state.transcript.append(_transcript_row(m, "stop", state))
                state.converged = True
                return OptimizationResult(start.with_xi(xi), state, fv, ev.forward_solves, ev.adjoint_solves)
            state.lam = state.lam - state.sigma * np.array([fv.C_Q, fv.C_V])
            state.zeta = state.sigma0 ** -0.9 * state.zeta
            branch = "multiplier"
        else:
            state.sigma = 10.0 * state.sigma
            state.zeta = state.sigma0 ** -0.1
            branch = "penalty"
        state.transcript.append(_transcript_row(m, branch, state))
        log.info("outer %d: %s J=%.6g C_Q=%.3g C_V=%.3g", m, branch, fv.J_PL, fv.C_Q, fv.C_V)
    xi, fv = best
    return OptimizationResult(start.with_xi(xi), state, fv, ev.forward_solves, ev.adjoint_solves)


def replay_transcript(state_rows, sigma0, zeta_star=1e-3, lam0=(0.0, 0.0)):
    """Recompute ``(lam, sigma, zeta)`` from the per-outer constraint values.

    ``state_rows`` is a sequence of ``(C_Q, C_V)``.  Used to check that a
    logged run followed the branch rules exactly.
    """
    st = OptState.initial(sigma0, zeta_star)
    st.lam = np.array(lam0, dtype=float)
    out = [_transcript_row(0, "init", st)]
    for m, (cq, cv) in enumerate(state_rows, start=1):
        if abs(cq) < st.zeta[0] and abs(cv) < st.zeta[1]:
            if abs(cq) < zeta_star and abs(cv) < zeta_star:
                out.append(_transcript_row(m, "stop", st))
                break
            st.lam = st.lam - st.sigma * np.array([cq, cv])
            st.zeta = st.sigma0 ** -0.9 * st.zeta
            out.append(_transcript_row(m, "multiplier", st))
        else:
            st.sigma = 10.0 * st.sigma
            st.zeta = st.sigma0 ** -0.1
            out.append(_transcript_row(m, "penalty", st))
    return out


def random_top_wall(N, rng, amplitude=0.15, top=1.0, bottom=-1.0, L=2.0 * np.pi):
    """Flat bottom wall and a random smooth top wall, modes decaying like ``1/k``."""
    from .geometry import UPPER, WallShapeParams, parameter_index

    xi = np.zeros(8 * N + 1)
    xi[4 * N] = top
    for k in range(1, 2 * N + 1):
        kk = k if k <= N else k - N
        xi[parameter_index(N, UPPER, 2, k)] = amplitude * rng.standard_normal() / kk
    return WallShapeParams(N, xi, anchor=bottom, L=L)


def symmetric_bump(N, amplitude=0.2, top=1.0, bottom=-1.0, L=2.0 * np.pi):
    """Both walls bulge outward at mid-period by ``amplitude`` (a ``cos t`` mode)."""
    from .geometry import LOWER, UPPER, WallShapeParams, parameter_index

    xi = np.zeros(8 * N + 1)
    xi[4 * N] = top
    # x2 = const - a + a cos t has its extremum -2a at t = pi
    xi[parameter_index(N, UPPER, 2, 1)] = -0.5 * amplitude
    xi[parameter_index(N, LOWER, 2, 1)] = 0.5 * amplitude
    return WallShapeParams(N, xi, anchor=bottom, L=L)


def lower_wall_frozen_mask(N):
    """Free-parameter mask that holds the lower wall fixed."""
    from .geometry import LOWER, parameter_index

    mask = np.ones(8 * N + 1, bool)
    for coord in (1, 2):
        for k in range(1, 2 * N + 1):
            mask[parameter_index(N, LOWER, coord, k)] = False
    return mask
