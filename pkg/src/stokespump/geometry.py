"""Periodic channel geometry: trigonometric wall parametrization and discretization.

Each wall is a curve ``x(t)``, ``t in [0, 2 pi]``, with coordinates::

    x1(t) = L t / (2 pi) - sum_{k<=N} a1_k + sum_{k<=2N} a1_k phi_k(t)
    x2(t) = a20         - sum_{k<=N} a2_k + sum_{k<=2N} a2_k phi_k(t)

where ``phi_k`` runs over ``cos t, ..., cos Nt, sin t, ..., sin Nt``.  The
subtracted sums pin ``x1(0) = 0``, ``x1(2 pi) = L`` and ``x2(0) = a20``.

Orientation conventions (one table, used everywhere):

============  =======================  ==========================
wall          unit tangent ``tau``     outward unit normal ``n``
============  =======================  ==========================
upper         ``-x'(t) / g``           ``( tau_2, -tau_1)``
lower         ``-x'(t) / g``           ``(-tau_2,  tau_1)``
============  =======================  ==========================

Arclength ``s`` therefore runs leftwards on both walls (``ds = -g dt``), the
normal points out of the fluid, and the curvature is ``kappa = tau_s . n``,
which evaluates to ``x''(t) . n / g**2``.  With this table a flat channel
carries the plug flow ``u = -c e1``.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

UPPER = "upper"
LOWER = "lower"
WALLS = (UPPER, LOWER)

MIN_GAP_FRACTION = 1e-3


class GeometryError(ValueError):
    """Raised for degenerate, inverted, or self-touching channel shapes."""


@dataclass(frozen=True)
class WallShapeParams:
    """Design vector of both walls.

    ``xi`` has length ``8N + 1`` in the order
    ``xi1+ (2N), xi1- (2N), xi20+, xi2+ (2N), xi2- (2N)``.  The lower wall
    offset ``anchor`` is not a design variable.
    """

    N: int
    xi: np.ndarray
    anchor: float = -1.0
    L: float = 2.0 * np.pi

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float).reshape(-1)
        if xi.size != 8 * self.N + 1:
            raise ValueError(f"expected {8 * self.N + 1} shape parameters, got {xi.size}")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    @property
    def size(self):
        return self.xi.size

    def with_xi(self, xi):
        return WallShapeParams(self.N, np.asarray(xi, dtype=float), self.anchor, self.L)

    def coefficients(self, which):
        """Return ``(a1, a20, a2)`` for one wall."""
        N = self.N
        xi = self.xi
        if which == UPPER:
            return xi[0:2 * N], xi[4 * N], xi[4 * N + 1:6 * N + 1]
        if which == LOWER:
            return xi[2 * N:4 * N], self.anchor, xi[6 * N + 1:8 * N + 1]
        raise ValueError(f"unknown wall {which!r}")

    @classmethod
    def flat(cls, N, top=1.0, bottom=-1.0, L=2.0 * np.pi):
        xi = np.zeros(8 * N + 1)
        xi[4 * N] = top
        return cls(N, xi, anchor=bottom, L=L)


def parameter_index(N, wall, coord, k):
    """Index of ``xi^{wall}_{coord,k}`` in the design vector.

    ``coord`` is 1 or 2; ``k`` is 1..2N, or 0 for the upper vertical offset.
    """
    if coord == 2 and k == 0:
        if wall != UPPER:
            raise ValueError("the lower wall offset is the fixed anchor, not a design parameter")
        return 4 * N
    if not 1 <= k <= 2 * N:
        raise ValueError(f"mode index {k} outside 1..{2 * N}")
    base = {(UPPER, 1): 0, (LOWER, 1): 2 * N, (UPPER, 2): 4 * N + 1, (LOWER, 2): 6 * N + 1}
    return base[(wall, coord)] + k - 1


def _basis(N, t, order=0):
    """Rows ``d^order/dt^order phi_k(t)`` for k = 1..2N; shape ``(2N, len(t))``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    k = np.arange(1, N + 1)[:, None]
    kt = k * t[None, :]
    c, s = np.cos(kt), np.sin(kt)
    # derivatives cycle cos -> -sin -> -cos -> sin
    cycle = [(c, s), (-k * s, k * c), (-k**2 * c, -k**2 * s)]
    dc, ds_ = cycle[order]
    return np.vstack([dc, ds_])


def _pin(N):
    """Row vector of the constant subtracted in front of each basis function."""
    return np.concatenate([np.ones(N), np.zeros(N)])


def wall_derivatives(params, which, t):
    """Position and first two ``t``-derivatives; each of shape ``(len(t), 2)``."""
    N, L = params.N, params.L
    t = np.atleast_1d(np.asarray(t, dtype=float))
    a1, a20, a2 = params.coefficients(which)
    out = []
    for order in range(3):
        B = _basis(N, t, order)
        if order == 0:
            B = B - _pin(N)[:, None]
        x1 = a1 @ B
        x2 = a2 @ B
        if order == 0:
            x1 = x1 + L * t / (2.0 * np.pi)
            x2 = x2 + a20
        elif order == 1:
            x1 = x1 + L / (2.0 * np.pi)
        out.append(np.column_stack([x1, x2]))
    return tuple(out)


def eval_wall(params, which, t):
    """Point ``(x1, x2)`` on a wall at parameter ``t``."""
    x, _, _ = wall_derivatives(params, which, np.atleast_1d(t))
    return x[0] if np.ndim(t) == 0 else x


def frenet(dx, ddx, which):
    """Speed, unit tangent, outward normal and curvature from ``t``-derivatives."""
    g = np.hypot(dx[:, 0], dx[:, 1])
    if np.any(g < 1e-10):
        raise GeometryError("degenerate parametrization: |dx/dt| vanishes")
    tau = -dx / g[:, None]
    if which == UPPER:
        n = np.column_stack([tau[:, 1], -tau[:, 0]])
    else:
        n = np.column_stack([-tau[:, 1], tau[:, 0]])
    kappa = np.einsum("ij,ij->i", ddx, n) / g**2
    return g, tau, n, kappa


@dataclass(frozen=True)
class DiscretizedWall:
    which: str
    M: int
    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    tau: np.ndarray
    n: np.ndarray
    kappa: np.ndarray
    g: np.ndarray

    @property
    def h(self):
        return 2.0 * np.pi / self.M

    @property
    def weights(self):
        """Arclength quadrature weights ``g_j 2 pi / M``."""
        return self.g * self.h

    @property
    def ell(self):
        return float(np.sum(self.weights))

    def integrate(self, values):
        """Periodic trapezoidal rule for ``int values ds`` (last axis = nodes)."""
        return np.asarray(values) @ self.weights


def discretize_wall(params, which, M):
    if M < 16 or M % 2:
        raise ValueError("M must be even and at least 16")
    t = 2.0 * np.pi * np.arange(M) / M
    x, dx, ddx = wall_derivatives(params, which, t)
    g, tau, n, kappa = frenet(dx, ddx, which)
    return DiscretizedWall(which, M, t, x, dx, tau, n, kappa, g)


def dl_star(wall, theta_n):
    """Rate of change of the wall length, ``-int kappa theta_n ds``."""
    return -wall.integrate(wall.kappa * np.asarray(theta_n))


@dataclass(frozen=True)
class ChannelGeometry:
    params: WallShapeParams
    upper: DiscretizedWall
    lower: DiscretizedWall
    volume: float
    z_plus: np.ndarray
    z_minus: np.ndarray
    section_x2: np.ndarray = field(repr=False)
    section_weights: np.ndarray = field(repr=False)
    min_gap: float = np.inf

    @property
    def L(self):
        return self.params.L

    @property
    def M(self):
        return self.upper.M

    @property
    def walls(self):
        return (self.upper, self.lower)

    @property
    def gap(self):
        return float(self.z_plus[1] - self.z_minus[1])


def channel_volume(geom):
    """Area of one period, from the divergence theorem with the field ``(0, x2)``.

    That field has no flux through the vertical end sections, so only the
    walls contribute, and the integrand ``x2 dx1/dt`` is periodic in ``t``.
    """
    area = 0.0
    for wall, sign in ((geom.upper, 1.0), (geom.lower, -1.0)):
        area += sign * wall.h * np.sum(wall.x[:, 1] * wall.dx[:, 0])
    if area <= 0.0:
        raise GeometryError(f"non-positive channel area {area:g}: walls inverted")
    return float(area)


def _min_wall_distance(params, M):
    t = 2.0 * np.pi * np.arange(4 * M) / (4 * M)
    up = eval_wall(params, UPPER, t)
    lo = eval_wall(params, LOWER, t)
    best = np.inf
    for shift in (-params.L, 0.0, params.L):
        d = up[:, None, :] - (lo[None, :, :] + np.array([shift, 0.0]))
        best = min(best, float(np.sqrt(np.min(np.einsum("ijk,ijk->ij", d, d)))))
    return best


def _segments_cross(a0, a1, b0, b1):
    """Pairwise proper-intersection test of segment sets ``a`` and ``b``."""

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    A0, A1 = a0[:, None], a1[:, None]
    B0, B1 = b0[None], b1[None]
    d1 = orient(B0, B1, A0)
    d2 = orient(B0, B1, A1)
    d3 = orient(A0, A1, B0)
    d4 = orient(A0, A1, B1)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def walls_intersect(params, samples=256):
    """True if the walls cross each other or themselves, periodic copies included."""
    t = 2.0 * np.pi * np.arange(samples + 1) / samples
    d = np.array([params.L, 0.0])
    polys = {w: eval_wall(params, w, t) for w in WALLS}
    for w in WALLS:
        p = polys[w]
        a0, a1 = p[:-1], p[1:]
        for shift in (-d, d):
            if np.any(_segments_cross(a0, a1, a0 + shift, a1 + shift)):
                return True
        hit = _segments_cross(a0, a1, a0, a1)
        # adjacent segments share an endpoint and never properly cross
        if np.any(np.triu(hit, 2)):
            return True
    up, lo = polys[UPPER], polys[LOWER]
    for shift in (-d, 0.0 * d, d):
        if np.any(_segments_cross(up[:-1], up[1:], lo[:-1] + shift, lo[1:] + shift)):
            return True
    return False


def build_channel(params, M=64, Mp=32):
    """Discretize both walls and the end sections; reject touching walls."""
    upper = discretize_wall(params, UPPER, M)
    lower = discretize_wall(params, LOWER, M)
    z_plus = eval_wall(params, UPPER, 2.0 * np.pi)
    z_minus = eval_wall(params, LOWER, 2.0 * np.pi)
    if z_plus[1] <= z_minus[1]:
        raise GeometryError("upper wall lies below the lower wall at the end section")
    gap = _min_wall_distance(params, M)
    if gap < MIN_GAP_FRACTION * params.L:
        raise GeometryError(f"walls too close: minimum distance {gap:.3g}")
    if walls_intersect(params, max(256, 4 * M)):
        raise GeometryError("walls intersect")
    nodes, weights = leggauss(Mp)
    half = 0.5 * (z_plus[1] - z_minus[1])
    section_x2 = z_minus[1] + half * (nodes + 1.0)
    geom = ChannelGeometry(params, upper, lower, 0.0, z_plus, z_minus, section_x2, half * weights, gap)
    object.__setattr__(geom, "volume", channel_volume(geom))
    return geom


def spectral_derivative(values):
    """``d/dt`` of samples of a smooth 2pi-periodic function on the uniform grid."""
    values = np.asarray(values, dtype=float)
    M = values.shape[-1]
    k = np.fft.rfftfreq(M, 1.0 / M)
    k[-1] = 0.0 if M % 2 == 0 else k[-1]
    return np.fft.irfft(1j * k * np.fft.rfft(values, axis=-1), n=M, axis=-1)


@dataclass(frozen=True)
class PerturbationField:
    """Transformation velocity sampled on both walls (index 0 upper, 1 lower).

    Arrays carry an optional leading batch axis when several directions are
    stacked (see :func:`basis_perturbations`).
    """

    theta: np.ndarray
    theta_s: np.ndarray
    theta_n: np.ndarray
    dtheta_n_ds: np.ndarray
    theta2_at_zplus: np.ndarray
    theta2_at_zminus: np.ndarray
    theta_endpoints: np.ndarray = field(repr=False)


def _direction_theta(params, direction, t):
    """Wall displacement per unit step along ``direction``; shape ``(..., 2, len(t), 2)``."""
    direction = np.asarray(direction, dtype=float)
    dparams = WallShapeParams(params.N, np.zeros(params.size), 0.0, 0.0)
    B = _basis(params.N, t) - _pin(params.N)[:, None]
    batch = direction.reshape(-1, params.size)
    out = np.empty((batch.shape[0], 2, len(t), 2))
    for b, p in enumerate(batch):
        dp = dparams.with_xi(p)
        for w, which in enumerate(WALLS):
            a1, a20, a2 = dp.coefficients(which)
            out[b, w, :, 0] = a1 @ B
            out[b, w, :, 1] = a2 @ B + (a20 if which == UPPER else 0.0)
    return out.reshape(direction.shape[:-1] + (2, len(t), 2))


def perturbation_field(params, direction, geom):
    """Exact transformation velocity induced by moving ``xi`` along ``direction``.

    The parametrization is linear in ``xi``, so ``theta = dx/dxi . direction``.
    """
    theta = _direction_theta(params, direction, geom.upper.t)
    tau = np.stack([geom.upper.tau, geom.lower.tau])
    n = np.stack([geom.upper.n, geom.lower.n])
    g = np.stack([geom.upper.g, geom.lower.g])
    theta_s = np.einsum("...wjk,wjk->...wj", theta, tau)
    theta_n = np.einsum("...wjk,wjk->...wj", theta, n)
    # s runs leftwards: d/ds = -(1/g) d/dt
    dtheta_n_ds = -spectral_derivative(theta_n) / g
    ends = _direction_theta(params, direction, np.array([2.0 * np.pi]))[..., 0, :]
    return PerturbationField(
        theta=theta,
        theta_s=theta_s,
        theta_n=theta_n,
        dtheta_n_ds=dtheta_n_ds,
        theta2_at_zplus=ends[..., 0, 1],
        theta2_at_zminus=ends[..., 1, 1],
        theta_endpoints=ends,
    )


def basis_perturbation(params, k, geom):
    e = np.zeros(params.size)
    e[k] = 1.0
    return perturbation_field(params, e, geom)


def basis_perturbations(params, geom):
    """All ``8N + 1`` basis directions stacked along a leading axis."""
    return perturbation_field(params, np.eye(params.size), geom)


def _point_to_polyline(points, poly):
    """Distance from each point to an open polyline, via the segments around the nearest vertex."""
    d2 = np.sum((points[:, None] - poly[None]) ** 2, axis=-1)
    j = np.clip(np.argmin(d2, axis=1), 1, len(poly) - 2)
    best = np.full(len(points), np.inf)
    for a, b in ((poly[j - 1], poly[j]), (poly[j], poly[j + 1])):
        ab = b - a
        s = np.clip(np.einsum("ij,ij->i", points - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(points - a - s[:, None] * ab, axis=1))
    return best


def shape_distance(pa, pb, samples=400):
    """Largest wall-to-wall distance between two shapes, up to rigid translation.

    Translations in ``x1`` and ``x2`` leave every functional unchanged, so the
    walls are compared as curves: the lower wall's mean height is removed and
    the horizontal shift is found by a grid search with local refinement.
    """
    L = pa.L
    t = np.linspace(0.0, 2.0 * np.pi, samples + 1)

    def curves(p):
        walls = [eval_wall(p, w, t) for w in WALLS]
        x, y = walls[1][:, 0], walls[1][:, 1]
        mean = np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)) / (x[-1] - x[0])
        return [w - [0.0, mean] for w in walls]

    ca, cb = curves(pa), curves(pb)

    def dist(shift):
        worst = 0.0
        for a, b in zip(ca, cb):
            b = np.vstack([b[:-1] + [shift + k * L, 0.0] for k in (-1, 0, 1)] + [b[-1:] + [shift + L, 0.0]])
            worst = max(worst, float(_point_to_polyline(a[::4], b).max()))
        return worst

    grid = np.linspace(-L / 2, L / 2, 61)
    for _ in range(4):
        values = [dist(s) for s in grid]
        best = grid[int(np.argmin(values))]
        step = grid[1] - grid[0]
        grid = np.linspace(best - step, best + step, 11)
    return min(values)
