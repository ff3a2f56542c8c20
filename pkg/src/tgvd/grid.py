"""Matrix-free finite difference operators on M x N pixel grids.

Fields are numpy arrays with the channel axis first:

* scalar field: ``(M, N)``
* vector field: ``(2, M, N)``
* tensor field: ``(4, M, N)`` ordered ``(d1 v1, sym, sym, d2 v2)`` where
  ``sym = (d1 v2 + d2 v1) / 2`` is stored twice.

Forward differences use constant extension at the last row/column, so the
last row of ``d1(u)`` and the last column of ``d2(u)`` vanish.  Grid spacing
is 1 and all norms are plain sums over pixels.
"""

import numpy as np

__all__ = [
    "check_scalar", "d1", "d2", "d1_adjoint", "d2_adjoint", "grad",
    "divergence", "grad_adjoint", "symgrad", "symgrad_adjoint", "jacobian",
    "jacobian_adjoint", "hessian", "hessian_adjoint", "laplacian",
    "pointwise_magnitude", "mixed_norm_l1", "mixed_norm_linf", "norm_l2",
    "inner",
]


def check_scalar(u):
    """Validate and return ``u`` as a float64 scalar field."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise ValueError(f"expected a 2-D scalar field, got shape {u.shape}")
    if u.shape[0] < 2 or u.shape[1] < 2:
        raise ValueError(f"grid must be at least 2x2, got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("field contains non-finite entries")
    return u


def d1(u):
    """Forward difference along rows: ``u[i+1, j] - u[i, j]``, last row 0."""
    out = np.zeros_like(u)
    out[:-1] = u[1:] - u[:-1]
    return out


def d2(u):
    """Forward difference along columns, last column 0."""
    out = np.zeros_like(u)
    out[:, :-1] = u[:, 1:] - u[:, :-1]
    return out


def d1_adjoint(p):
    """Transpose of :func:`d1`."""
    out = np.empty_like(p)
    out[0] = -p[0]
    out[1:-1] = p[:-2] - p[1:-1]
    out[-1] = p[-2]
    return out


def d2_adjoint(p):
    """Transpose of :func:`d2`."""
    out = np.empty_like(p)
    out[:, 0] = -p[:, 0]
    out[:, 1:-1] = p[:, :-2] - p[:, 1:-1]
    out[:, -1] = p[:, -2]
    return out


def grad(u):
    return np.stack((d1(u), d2(u)))


def grad_adjoint(v):
    """``grad^T v``, i.e. ``-div v``."""
    return d1_adjoint(v[0]) + d2_adjoint(v[1])


def divergence(v):
    """Discrete divergence, the negative adjoint of :func:`grad`."""
    return -grad_adjoint(v)


def symgrad(v):
    """Symmetrized gradient of a vector field (4 channels)."""
    off = 0.5 * (d2(v[0]) + d1(v[1]))
    return np.stack((d1(v[0]), off, off.copy(), d2(v[1])))


def symgrad_adjoint(q):
    off = 0.5 * (q[1] + q[2])
    return np.stack((d1_adjoint(q[0]) + d2_adjoint(off),
                     d1_adjoint(off) + d2_adjoint(q[3])))


def jacobian(v):
    """Unsymmetrized Jacobian ``(d1 v1, d2 v1, d1 v2, d2 v2)``."""
    return np.stack((d1(v[0]), d2(v[0]), d1(v[1]), d2(v[1])))


def jacobian_adjoint(q):
    return np.stack((d1_adjoint(q[0]) + d2_adjoint(q[1]),
                     d1_adjoint(q[2]) + d2_adjoint(q[3])))


def hessian(u):
    """Discrete Hessian, defined as ``symgrad(grad(u))``."""
    return symgrad(grad(u))


def hessian_adjoint(q):
    return grad_adjoint(symgrad_adjoint(q))


def laplacian(u):
    """``div(grad(u))`` with the Neumann-type boundary of the stencils."""
    return divergence(grad(u))


def pointwise_magnitude(x):
    """Euclidean norm over the channel axis at every pixel."""
    return np.sqrt(np.sum(x * x, axis=0))


def mixed_norm_l1(x):
    """Sum over pixels of the pointwise Euclidean magnitude."""
    return float(np.sum(pointwise_magnitude(x)))


def mixed_norm_linf(x):
    """Largest pointwise Euclidean magnitude."""
    return float(np.max(pointwise_magnitude(x)))


def norm_l2(x):
    return float(np.sqrt(np.sum(x * x)))


def inner(x, y):
    return float(np.sum(x * y))
