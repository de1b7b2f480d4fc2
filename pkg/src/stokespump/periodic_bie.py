"""Periodized single-layer boundary integral solver for channel Stokes flow.

The velocity in the unit cell is represented as

    u(x) = sum_{|n|<=1} int_Gamma S(x, y + n d) sigma(y) ds_y + sum_m S(x, p_m) c_m,

with ``d = (L, 0)``.  The three near copies of both walls are discretized by
the trapezoidal rule in ``t``.  The log singularity on the self wall is
handled by the periodic Kress weights.  Stokeslets ``c_m`` on a proxy circle
stand in for all remaining copies.  Periodicity of velocity and traction
(or a prescribed pressure jump) is imposed at Gauss-Legendre nodes on the
end sections.  The rectangular block system is solved by truncated SVD, so
one factorization serves the forward and the adjoint right-hand sides.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import WALLS
from .kernels import pressure_kernel, stokeslet, traction_kernel


class SolverError(RuntimeError):
    """Raised when the block system cannot be factorized or solved accurately."""


@dataclass(frozen=True)
class SolverConfig:
    M: int = 64
    K: int = 64
    Mp: int = 32
    proxy_scale: float = 1.5
    proxy_center: tuple | None = None
    proxy_radius: float | None = None
    mu: float = 1.0
    c: float = 1.0
    rcond: float = 1e-14

    def __post_init__(self):
        if self.M < 16 or self.M % 2:
            raise ValueError("M must be even and at least 16")
        if self.K < 16:
            raise ValueError("K must be at least 16")
        if self.Mp < 8:
            raise ValueError("Mp must be at least 8")
        if self.mu <= 0:
            raise ValueError("viscosity must be positive")

    def updated(self, **changes):
        return replace(self, **changes)


def _block(K):
    """``(nt, ns, 2, 2)`` kernel array to a ``(2 nt, 2 ns)`` matrix, node-major."""
    nt, ns = K.shape[:2]
    return K.transpose(0, 2, 1, 3).reshape(2 * nt, 2 * ns)


def kress_weights(M):
    """Matrix ``R[i, j]`` with ``int log(4 sin^2((t_i - s)/2)) phi(s) ds ~ sum_j R_ij phi_j``."""
    # circulant: build one column, then index by (i - j) mod M
    t = 2.0 * np.pi * np.arange(M) / M
    m = np.arange(1, M // 2)
    col = -(4.0 * np.pi / M) * np.cos(np.outer(t, m)).dot(1.0 / m)
    col -= (4.0 * np.pi / M**2) * np.cos(0.5 * M * t)
    k = np.arange(M)
    return col[(k[:, None] - k[None, :]) % M]


def _wall_nodes(geom):
    y = np.concatenate([w.x for w in geom.walls])
    w = np.concatenate([w.weights for w in geom.walls])
    n = np.concatenate([w.n for w in geom.walls])
    tau = np.concatenate([w.tau for w in geom.walls])
    kappa = np.concatenate([w.kappa for w in geom.walls])
    return y, w, n, tau, kappa


def proxy_points(geom, cfg):
    """Proxy circle: centered on the cell, enclosing walls and end sections."""
    if cfg.proxy_center is None:
        x2 = np.concatenate([w.x[:, 1] for w in geom.walls])
        center = np.array([0.5 * geom.L, 0.5 * (x2.max() + x2.min())])
    else:
        center = np.asarray(cfg.proxy_center, dtype=float)
    pts = np.concatenate([w.x for w in geom.walls] + [geom.z_plus[None], geom.z_minus[None]])
    pts = np.concatenate([pts, pts - [geom.L, 0.0]])
    bound = np.max(np.hypot(*(pts - center).T))
    radius = cfg.proxy_radius if cfg.proxy_radius is not None else cfg.proxy_scale * bound
    if radius <= bound:
        raise SolverError(f"proxy radius {radius:g} does not enclose the cell (needs > {bound:g})")
    phi = 2.0 * np.pi * np.arange(cfg.K) / cfg.K
    return center + radius * np.column_stack([np.cos(phi), np.sin(phi)])


def _copies(L):
    return [np.array([n * L, 0.0]) for n in (-1, 0, 1)]


def _near_velocity(targets, y, w, L, mu):
    """Plain trapezoidal near-copy velocity operator, ``(2 nt, 2 ns)``."""
    A = np.zeros((2 * len(targets), 2 * len(y)))
    for shift in _copies(L):
        A += _block(stokeslet(targets[:, None, :], (y + shift)[None, :, :], mu) * w[None, :, None, None])
    return A


def _self_velocity(geom, mu):
    """On-wall limit of the near-copy single layer with Kress log correction."""
    L, M = geom.L, geom.M
    y, w, _, tau, _ = _wall_nodes(geom)
    nt = len(y)
    R = kress_weights(M)
    t = geom.upper.t
    dt = t[:, None] - t[None, :]
    A = np.zeros((nt, nt, 2, 2))
    eye = np.eye(2)
    with np.errstate(divide="ignore"):
        logsin = np.log(4.0 * np.sin(0.5 * dt) ** 2)
    for shift in _copies(L):
        r = y[:, None, :] - (y + shift)[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", r, r)
        hit = r2 == 0.0
        r2[hit] = 1.0
        S = r[..., :, None] * r[..., None, :] / r2[..., None, None] - 0.5 * np.log(r2)[..., None, None] * eye
        S[hit] = 0.0
        A += S * w[None, :, None, None]
    h = 2.0 * np.pi / M
    for k, wall in enumerate(geom.walls):
        sl = slice(k * M, (k + 1) * M)
        corr = -0.5 * (R - h * np.where(np.eye(M, dtype=bool), 0.0, logsin)) * wall.g[None, :]
        np.fill_diagonal(corr, 0.0)
        A[sl, sl] += corr[..., None, None] * eye
        idx = np.arange(k * M, (k + 1) * M)
        diag = (-0.5 * np.diag(R) - h * np.log(wall.g))[:, None, None] * eye
        diag = diag + h * tau[idx, :, None] * tau[idx, None, :]
        A[idx, idx] += diag * wall.g[:, None, None]
    return _block(A) / (4.0 * np.pi * mu)


def _self_traction(geom):
    """Principal-value part of the on-wall traction operator (no jump term)."""
    L = geom.L
    y, w, n, tau, kappa = _wall_nodes(geom)
    nt = len(y)
    T = np.zeros((nt, nt, 2, 2))
    for shift in _copies(L):
        r = y[:, None, :] - (y + shift)[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", r, r)
        hit = r2 == 0.0
        r2[hit] = 1.0
        rn = np.einsum("ijk,ik->ij", r, n)
        Tk = -(rn / (np.pi * r2 * r2))[..., None, None] * r[..., :, None] * r[..., None, :]
        Tk[hit] = 0.0
        T += Tk * w[None, :, None, None]
    idx = np.arange(nt)
    T[idx, idx] += (kappa / (2.0 * np.pi) * w)[:, None, None] * tau[:, :, None] * tau[:, None, :]
    return _block(T)


def _section_nodes(geom):
    x2 = geom.section_x2
    x0 = np.column_stack([np.zeros_like(x2), x2])
    return x0, x0 + [geom.L, 0.0]


def check_resolution(geom):
    """Reject shapes the trapezoidal rule cannot resolve at this ``M``.

    Plain quadrature between walls needs a gap of at least one node spacing,
    and the wall must not bend on a scale finer than one node spacing.
    """
    spacing = max(float(np.max(w.weights)) for w in geom.walls)
    if geom.min_gap < spacing:
        raise SolverError(f"wall gap {geom.min_gap:.3g} below node spacing {spacing:.3g}; increase M")
    bend = max(float(np.max(np.abs(w.kappa) * w.weights)) for w in geom.walls)
    if bend > 1.0:
        raise SolverError(f"curvature radius below node spacing (kappa*ds = {bend:.3g}); increase M")


@dataclass(frozen=True)
class BlockSystem:
    """Assembled and factorized collocation system for one geometry."""

    geom: object
    cfg: SolverConfig
    proxies: np.ndarray
    matrix: np.ndarray = field(repr=False)
    traction_op: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    Vt: np.ndarray = field(repr=False)
    rank: int

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def condition(self):
        return float(self.s[0] / self.s[-1]) if self.s[-1] > 0 else np.inf

    def solve(self, rhs):
        r = self.rank
        coef = (self.U[:, :r].T @ rhs) / self.s[:r]
        return self.Vt[:r].T @ coef


def assemble_system(geom, cfg=None):
    """Assemble ``[[A, B], [C, D]]`` and factorize it by SVD.

    Rows: wall velocity (``4M``), then velocity mismatch and traction mismatch
    on the end sections (``2 Mp`` each).  Columns: wall density (``4M``),
    then proxy Stokeslet strengths (``2K``).
    """
    cfg = cfg or SolverConfig(M=geom.M, Mp=len(geom.section_x2))
    if cfg.M != geom.M or cfg.Mp != len(geom.section_x2):
        raise ValueError("geometry was discretized with a different M or Mp than the solver config")
    check_resolution(geom)
    L, mu = geom.L, cfg.mu
    y, w, _, _, _ = _wall_nodes(geom)
    proxies = proxy_points(geom, cfg)
    x0, xL = _section_nodes(geom)
    e1 = np.array([1.0, 0.0])
    d = np.array([L, 0.0])

    A = _self_velocity(geom, mu)
    B = _block(stokeslet(y[:, None, :], proxies[None, :, :], mu))

    # telescoped near-copy sums: only the two outermost copies survive
    ww = w[None, :, None, None]
    Cu = _block(stokeslet(xL[:, None], (y - d)[None], mu) * ww - stokeslet(x0[:, None], (y + d)[None], mu) * ww)
    Ct = _block(traction_kernel(xL[:, None], (y - d)[None], e1) * ww - traction_kernel(x0[:, None], (y + d)[None], e1) * ww)
    Du = _block(stokeslet(xL[:, None], proxies[None], mu) - stokeslet(x0[:, None], proxies[None], mu))
    Dt = _block(traction_kernel(xL[:, None], proxies[None], e1) - traction_kernel(x0[:, None], proxies[None], e1))

    matrix = np.block([[A, B], [Cu, Du], [Ct, Dt]])
    if not np.all(np.isfinite(matrix)):
        raise SolverError("non-finite entries in the assembled system")
    try:
        U, s, Vt = np.linalg.svd(matrix, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"SVD failed: {exc}") from exc
    rank = int(np.sum(s > cfg.rcond * s[0]))

    Tp = _block(traction_kernel(y[:, None], proxies[None], np.repeat(_wall_nodes(geom)[2][:, None], len(proxies), 1)))
    traction_op = np.hstack([_self_traction(geom), Tp])
    return BlockSystem(geom, cfg, proxies, matrix, traction_op, U, s, Vt, rank)


@dataclass(frozen=True)
class FlowSolution:
    """Solved density and derived wall fields; index 0 is the upper wall."""

    kind: str
    system: BlockSystem = field(repr=False)
    density: np.ndarray = field(repr=False)
    proxy_coeffs: np.ndarray = field(repr=False)
    wall_velocity: np.ndarray = field(repr=False)
    wall_traction: np.ndarray = field(repr=False)
    wall_pressure: np.ndarray = field(repr=False)
    wall_fs: np.ndarray = field(repr=False)
    pressure_shift: float
    pressure_jump: float
    residual: float

    @property
    def geom(self):
        return self.system.geom

    @property
    def cfg(self):
        return self.system.cfg


def slip_velocity(geom, c=1.0):
    """Wave-frame wall velocity ``(c l / L) tau`` on each wall, shape ``(2, M, 2)``."""
    return np.stack([(c * w.ell / geom.L) * w.tau for w in geom.walls])


def _solve(system, kind):
    geom, cfg = system.geom, system.cfg
    M, Mp = geom.M, cfg.Mp
    rhs = np.zeros(system.shape[0])
    if kind == "forward":
        ud = slip_velocity(geom, cfg.c)
        rhs[:4 * M] = ud.reshape(-1)
        jump = 0.0
    elif kind == "adjoint":
        ud = np.zeros((2, M, 2))
        # unit pressure rise across the cell: traction jump -e1
        rhs[4 * M + 2 * Mp::2] = -1.0
        jump = 1.0
    else:
        raise ValueError(f"unknown problem kind {kind!r}")
    sol = system.solve(rhs)
    res = np.linalg.norm(system.matrix @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if not np.isfinite(res) or res > 1e-6:
        raise SolverError(f"{kind} solve residual {res:.2e} too large")
    return sol, ud, jump, float(res)


def _traction(system, x):
    """Interior limit ``f = sigma/2 + PV sum``, then ``p = -f.n`` and ``f_s = f.tau``."""
    geom = system.geom
    M = geom.M
    dens = x[:4 * M].reshape(2, M, 2)
    f = 0.5 * dens + (system.traction_op @ x).reshape(2, M, 2)
    n = np.stack([w.n for w in geom.walls])
    tau = np.stack([w.tau for w in geom.walls])
    p = -np.einsum("wjk,wjk->wj", f, n)
    fs = np.einsum("wjk,wjk->wj", f, tau)
    return f, p, fs


def wall_traction(sol, geom=None):
    """Nodal traction ``f``, pressure ``p`` and shear ``f_s``, each indexed ``[wall, node]``.

    The pressure gauge of the solution is applied, so ``f = -p n + f_s tau``.
    """
    return sol.wall_traction, sol.wall_pressure, sol.wall_fs


def _finish(system, kind):
    geom, cfg = system.geom, system.cfg
    x, ud, jump, res = _solve(system, kind)
    f, p, fs = _traction(system, x)
    if kind == "forward":
        shift = float(np.mean(p))
    else:
        mid = np.array([[0.0, 0.5 * (geom.z_plus[1] + geom.z_minus[1])]])
        shift = float(_field(system, x, mid)[1][0])
    n = np.stack([w.n for w in geom.walls])
    p = p - shift
    f = f + shift * n
    M = geom.M
    return FlowSolution(
        kind=kind,
        system=system,
        density=x[:4 * M].reshape(2, M, 2),
        proxy_coeffs=x[4 * M:].reshape(-1, 2),
        wall_velocity=ud,
        wall_traction=f,
        wall_pressure=p,
        wall_fs=fs,
        pressure_shift=shift,
        pressure_jump=jump,
        residual=res,
    )


def solve_forward(geom_or_system, cfg=None):
    """Wave-frame flow driven by the wall slip ``(c l/L) tau`` with periodic ends."""
    system = geom_or_system if isinstance(geom_or_system, BlockSystem) else assemble_system(geom_or_system, cfg)
    return _finish(system, "forward")


def solve_adjoint(geom_or_system, cfg=None):
    """No-slip flow driven by a unit pressure rise from the left to the right end section."""
    system = geom_or_system if isinstance(geom_or_system, BlockSystem) else assemble_system(geom_or_system, cfg)
    return _finish(system, "adjoint")


def _field(system, x, points):
    geom, cfg = system.geom, system.cfg
    points = np.atleast_2d(np.asarray(points, dtype=float))
    y, w, _, _, _ = _wall_nodes(geom)
    M = geom.M
    dens = x[:4 * M].reshape(-1, 2)
    coef = x[4 * M:].reshape(-1, 2)
    u = np.zeros_like(points)
    p = np.zeros(len(points))
    for shift in _copies(geom.L):
        ys = (y + shift)[None]
        u += np.einsum("ijab,jb->ia", stokeslet(points[:, None], ys, cfg.mu), dens * w[:, None])
        p += np.einsum("ija,ja->i", pressure_kernel(points[:, None], ys), dens * w[:, None])
    u += np.einsum("ijab,jb->ia", stokeslet(points[:, None], system.proxies[None], cfg.mu), coef)
    p += np.einsum("ija,ja->i", pressure_kernel(points[:, None], system.proxies[None]), coef)
    return u, p


def near_wall_mask(geom, points, spacings=5.0):
    """True where a point is closer to a wall than ``spacings`` node spacings."""
    points = np.atleast_2d(points)
    y = np.concatenate([w.x for w in geom.walls])
    hmax = max(np.max(w.weights) for w in geom.walls)
    best = np.full(len(points), np.inf)
    for shift in _copies(geom.L):
        d = points[:, None, :] - (y + shift)[None]
        best = np.minimum(best, np.sqrt(np.min(np.einsum("ijk,ijk->ij", d, d), axis=1)))
    return best < spacings * hmax


def eval_field(sol, points, strict=False):
    """Velocity ``(n, 2)`` and gauged pressure ``(n,)`` at interior points.

    Also returns a boolean mask of points within five node spacings of a wall,
    where plain quadrature loses accuracy.  With ``strict`` such points raise.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    flagged = near_wall_mask(sol.geom, points)
    if strict and np.any(flagged):
        raise ValueError(f"{int(flagged.sum())} evaluation points are too close to a wall")
    x = np.concatenate([sol.density.reshape(-1), sol.proxy_coeffs.reshape(-1)])
    u, p = _field(sol.system, x, points)
    return u, p - sol.pressure_shift, flagged


def section_flux(sol):
    """``int_{Gamma_L} u_1 dx_2`` from wall data only (reciprocity with plane Poiseuille).

    Pairing the solution with ``v = (x_2^2 / 2mu, 0)``, ``q = x_1`` over one
    period leaves only wall integrals and the pressure jump across the cell.
    """
    geom, mu = sol.geom, sol.cfg.mu
    total = 0.0
    for k, wall in enumerate(geom.walls):
        x2 = wall.x[:, 1]
        u = sol.wall_velocity[k]
        n = wall.n
        f1 = sol.wall_traction[k, :, 0]
        integrand = 2.0 * mu * x2 * (n[:, 1] * u[:, 0] + n[:, 0] * u[:, 1]) - x2**2 * f1
        total += wall.integrate(integrand)
    total += sol.pressure_jump * (geom.z_plus[1] ** 3 - geom.z_minus[1] ** 3) / 3.0
    return total / (2.0 * mu * geom.L)


__all__ = [
    "SolverConfig",
    "SolverError",
    "BlockSystem",
    "FlowSolution",
    "assemble_system",
    "solve_forward",
    "solve_adjoint",
    "wall_traction",
    "eval_field",
    "section_flux",
    "slip_velocity",
    "kress_weights",
    "proxy_points",
    "near_wall_mask",
    "WALLS",
]
