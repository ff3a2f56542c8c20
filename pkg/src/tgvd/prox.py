"""Proximal maps and norm-ball projections on grid fields.

Vector and tensor fields carry their channels on axis 0; "pointwise"
norms are Euclidean norms over that axis.
"""

import numpy as np

from .grid import pointwise_magnitude

__all__ = [
    "project_l2_ball", "project_linf_l2_ball", "project_l1_l2_ball",
    "l1_ball_threshold", "prox_via_moreau", "group_soft_threshold",
    "prox_tgv_data", "prox_shifted_linf",
]


def project_l2_ball(u, center, delta):
    """Euclidean projection onto ``{x : ||x - center||_2 <= delta}``."""
    if delta < 0:
        raise ValueError("radius must be non-negative")
    d = u - center
    nrm = np.sqrt(np.sum(d * d))
    if nrm <= delta:
        return u.copy()
    return center + (delta / nrm) * d


def project_linf_l2_ball(x, delta):
    """Shrink every pixel group of ``x`` onto the Euclidean ball of radius ``delta``."""
    if delta < 0:
        raise ValueError("radius must be non-negative")
    mag = pointwise_magnitude(x)
    if delta == 0:
        return np.zeros_like(x)
    return x / np.maximum(1.0, mag / delta)


def l1_ball_threshold(mag, delta):
    """Threshold ``lam >= 0`` with ``sum(max(mag - lam, 0)) == delta``.

    Returns 0 when ``sum(mag) <= delta``.  Exact search over the sorted
    breakpoints of the piecewise-linear left-hand side.
    """
    m = np.asarray(mag, dtype=float).ravel()
    if m.sum() <= delta:
        return 0.0
    if delta <= 0:
        return float(m.max())
    s = np.sort(m)[::-1]
    cums = np.cumsum(s) - delta
    k = np.arange(1, s.size + 1)
    # s is non-increasing and cums/k crosses it exactly once
    active = s - cums / k > 0
    if not active.any():
        return _bisect_threshold(m, delta)
    r = np.nonzero(active)[0][-1]
    return float(max(cums[r] / (r + 1), 0.0))


def _bisect_threshold(m, delta, iters=200):
    lo, hi = 0.0, float(m.max())
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(m - mid, 0.0).sum() > delta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def project_l1_l2_ball(x, delta, center=None):
    """Euclidean projection onto ``{y : sum_ij |y_ij - c_ij| <= delta}``.

    Pixels where ``x`` equals the center stay at the center.
    """
    if delta < 0:
        raise ValueError("radius must be non-negative")
    c = np.zeros_like(x) if center is None else center
    d = x - c
    mag = pointwise_magnitude(d)
    if mag.sum() <= delta:
        return x.copy()
    if delta == 0:
        return np.array(c, dtype=float, copy=True)
    lam = l1_ball_threshold(mag, delta)
    scale = np.zeros_like(mag)
    nz = mag > 0
    scale[nz] = np.maximum(mag[nz] - lam, 0.0) / mag[nz]
    return c + scale * d


def prox_via_moreau(prox_conj, tau, x):
    """Prox of ``tau F`` from the prox of the conjugate (Moreau identity).

    ``prox_conj(y, step)`` must evaluate ``prox_{step F*}(y)``.
    """
    return x - tau * prox_conj(x / tau, 1.0 / tau)


def group_soft_threshold(x, tau):
    """Prox of ``tau * sum_ij |x_ij|``."""
    if tau == 0:
        return x.copy()
    return prox_via_moreau(lambda y, step: project_linf_l2_ball(y, 1.0), tau, x)


def prox_tgv_data(u, u0, t):
    """Prox of ``t/2 ||u - u0||^2``."""
    return (u + t * u0) / (1.0 + t)


def prox_shifted_linf(q, sigma, shift, delta):
    """Project ``q - sigma * shift`` onto the pointwise ball of radius ``delta``."""
    return project_linf_l2_ball(q - sigma * shift, delta)
