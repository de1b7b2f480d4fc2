"""Free-space 2D Stokes kernels.

All functions broadcast over leading dimensions: ``x`` and ``y`` are arrays of
shape ``(..., 2)`` and the kernels are returned with the two trailing tensor
indices last.  With ``r = x - y``::

    S(x, y) = (1/(4 pi mu)) (-log|r| I + r r^T / |r|^2)     velocity per unit force
    Q(x, y) = (1/(2 pi)) r / |r|^2                           pressure per unit force
    T(x, y) = -(1/pi) r r^T (r . n_x) / |r|^4                traction per unit force

No self-interaction handling happens here; singular quadrature lives in
:mod:`stokespump.periodic_bie`.
"""

import numpy as np


def _separation(x, y):
    r = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r2 = np.einsum("...i,...i->...", r, r)
    if np.any(r2 == 0.0):
        raise ValueError("Stokes kernel evaluated at coincident points")
    return r, r2


def stokeslet(x, y, mu=1.0):
    """Velocity at ``x`` due to a unit point force at ``y``; shape ``(..., 2, 2)``."""
    r, r2 = _separation(x, y)
    rr = r[..., :, None] * r[..., None, :] / r2[..., None, None]
    logr = 0.5 * np.log(r2)
    S = rr - logr[..., None, None] * np.eye(2)
    return S / (4.0 * np.pi * mu)


def pressure_kernel(x, y):
    """Pressure at ``x`` due to a unit point force at ``y``; shape ``(..., 2)``."""
    r, r2 = _separation(x, y)
    return r / (2.0 * np.pi * r2[..., None])


def traction_kernel(x, y, n_x):
    """Traction on a surface with unit normal ``n_x`` at ``x``; shape ``(..., 2, 2)``.

    Independent of viscosity: the stress of a Stokeslet is ``-(1/pi) r_i r_j r_k / |r|^4``.
    """
    r, r2 = _separation(x, y)
    rn = np.einsum("...i,...i->...", r, np.asarray(n_x, dtype=float))
    rr = r[..., :, None] * r[..., None, :]
    return -(rn / (np.pi * r2 * r2))[..., None, None] * rr


def stokeslet_gradient(x, y, mu=1.0):
    """Velocity gradient of a Stokeslet: ``G[..., i, j, k] = d S_ij / d x_k``."""
    r, r2 = _separation(x, y)
    eye = np.eye(2)
    ri = r[..., :, None, None]
    rj = r[..., None, :, None]
    rk = r[..., None, None, :]
    inv = 1.0 / r2[..., None, None, None]
    G = (
        -eye[:, :, None] * rk * inv
        + (eye[:, None, :] * rj + eye[None, :, :] * ri) * inv
        - 2.0 * ri * rj * rk * inv * inv
    )
    return G / (4.0 * np.pi * mu)


def stokeslet_stress(x, y):
    """Stress tensor of a Stokeslet: ``sigma[..., i, j, k]`` is ``sigma_ij`` per unit force ``F_k``."""
    r, r2 = _separation(x, y)
    ri = r[..., :, None, None]
    rj = r[..., None, :, None]
    rk = r[..., None, None, :]
    return -ri * rj * rk / (np.pi * (r2 * r2)[..., None, None, None])
