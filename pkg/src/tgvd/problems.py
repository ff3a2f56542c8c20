"""Saddle-point formulations ``min_x F(x) + G(Kx)`` of the denoising models.

Every model is a :class:`SaddleProblem` working on flat float vectors; the
primal vector stacks the image block (if any) before the vector-field
block, the dual vector stacks its parts in the order listed in
``dual_parts``.  Use :meth:`SaddleProblem.split_primal` /
:meth:`SaddleProblem.split_dual` to get field views.

Variants
--------
ROF_CONSTRAINED  min ||| grad u |||_1            s.t. ||u - u0|| <= delta1
DGTV2            min ||| grad u - v_hat |||_1    s.t. ||u - u0|| <= delta1
DGTV1            min ||| E v |||_1               s.t. ||| grad u0 - v |||_1 <= delta2
DGTGV1           min ||| w |||_1 + alpha ||| E(grad u0 - w) |||_1   (w = grad u0 - v)
TGV              min alpha1 |||grad u - v||| + alpha0 |||E v||| + 1/2 ||u - u0||^2
MTGV             min |||grad u - v||| + alpha |||E v|||              s.t. ||u - u0|| <= delta1
MTGV_W           min |||w||| + alpha |||E(grad u - w)|||             s.t. ||u - u0|| <= delta1
CTGV             min |||E(grad u - w)|||  s.t. ||u - u0|| <= delta1, |||w|||_1 <= delta2
"""

from dataclasses import dataclass
import math

import numpy as np

from . import grid
from .prox import (group_soft_threshold, project_l1_l2_ball, project_l2_ball,
                   project_linf_l2_ball, prox_tgv_data)

VARIANTS = ("ROF_CONSTRAINED", "DGTV1", "DGTV2", "DGTGV1", "TGV", "MTGV",
            "MTGV_W", "CTGV")

_REQUIRED = {
    "ROF_CONSTRAINED": ("delta1",),
    "DGTV1": ("delta2",),
    "DGTV2": ("delta1", "v_hat"),
    "DGTGV1": ("alpha",),
    "TGV": ("alpha0", "alpha1"),
    "MTGV": ("delta1", "alpha"),
    "MTGV_W": ("delta1", "alpha"),
    "CTGV": ("delta1", "delta2"),
}

# relative slack for indicator functions of norm balls
FEAS_RTOL = 1e-6
FEAS_ATOL = 1e-12
# slack when checking dual feasibility before a modified gap
DUAL_RTOL = 1e-9


def within(value, radius):
    """Constraint ``value <= radius`` up to round-off."""
    return value <= radius * (1.0 + FEAS_RTOL) + FEAS_ATOL


class MissingParameter(ValueError):
    pass


class InfeasibleDual(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Model variant plus its data and parameters."""

    variant: str
    u0: np.ndarray
    v_hat: np.ndarray = None
    delta1: float = None
    delta2: float = None
    alpha: float = None
    alpha0: float = None
    alpha1: float = None
    c: float = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        object.__setattr__(self, "u0", grid.check_scalar(self.u0))
        for name in _REQUIRED[self.variant]:
            if getattr(self, name) is None:
                raise MissingParameter(f"{self.variant} requires {name}")
        for name in ("delta1", "delta2"):
            val = getattr(self, name)
            if val is not None and not (val >= 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be finite and >= 0, got {val}")
        for name in ("alpha", "alpha0", "alpha1"):
            val = getattr(self, name)
            if val is not None and not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be finite and > 0, got {val}")
        if self.c is not None and not 0 < self.c:
            raise ValueError("c must be positive")
        if self.v_hat is not None:
            v = np.asarray(self.v_hat, dtype=float)
            if v.shape != (2,) + self.u0.shape:
                raise ValueError(f"v_hat must have shape {(2,) + self.u0.shape}")
            object.__setattr__(self, "v_hat", v)

    @property
    def shape(self):
        return self.u0.shape

    def replace(self, **changes):
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(changes)
        return ProblemSpec(**kw)


class _Layout:
    """Packs fields with given channel counts (0 = scalar) into a flat vector."""

    def __init__(self, channels, shape):
        self.shape = shape
        self.channels = channels
        n = shape[0] * shape[1]
        sizes = [n * max(c, 1) for c in channels]
        self.offsets = np.concatenate(([0], np.cumsum(sizes)))
        self.size = int(self.offsets[-1])

    def split(self, x):
        parts = []
        for i, c in enumerate(self.channels):
            block = x[self.offsets[i]:self.offsets[i + 1]]
            parts.append(block.reshape(self.shape if c == 0 else (c,) + self.shape))
        return parts

    def join(self, *parts):
        return np.concatenate([np.ravel(p) for p in parts])

    def zeros(self):
        return np.zeros(self.size)


class SaddleProblem:
    """Base class; subclasses fill in operators, prox maps and gaps.

    Class attributes
    ----------------
    formulation : {"U", "UV", "UW", "V"}
        Which ``I + st K^T K`` system the Douglas-Rachford resolvent needs.
    primal_parts, dual_parts : tuple of int
        Channel counts of the stacked fields (0 for a scalar field).
    """

    formulation = None
    primal_parts = ()
    dual_parts = ()
    # operator norm squared used for default step sizes, None = estimate
    norm_sq_hint = None

    def __init__(self, spec):
        self.spec = spec
        self.u0 = spec.u0
        self.shape = spec.u0.shape
        self.primal_layout = _Layout(self.primal_parts, self.shape)
        self.dual_layout = _Layout(self.dual_parts, self.shape)
        self._grad_u0 = grid.grad(self.u0)

    # --- layout -------------------------------------------------------
    def split_primal(self, x):
        return self.primal_layout.split(x)

    def split_dual(self, y):
        return self.dual_layout.split(y)

    def join_primal(self, *parts):
        return self.primal_layout.join(*parts)

    def join_dual(self, *parts):
        return self.dual_layout.join(*parts)

    def initial_dual(self):
        return self.dual_layout.zeros()

    # --- interface ----------------------------------------------------
    def initial_primal(self):
        raise NotImplementedError

    def K(self, x):
        raise NotImplementedError

    def Kt(self, y):
        raise NotImplementedError

    def prox_F(self, x, tau):
        raise NotImplementedError

    def prox_Gconj(self, y, sigma):
        raise NotImplementedError

    def objective(self, x):
        raise NotImplementedError

    def gap(self, x, y):
        """Literal duality gap; ``inf`` if an indicator is violated."""
        raise NotImplementedError

    def gap_modified(self, x, y):
        """Finite upper bound on ``objective(x) - min objective``."""
        raise NotImplementedError

    def image(self, x):
        """Denoised image contained in ``x`` (``None`` for gradient stages)."""
        return None

    def gradient_field(self, x):
        """Gradient estimate ``v`` contained in ``x`` (``None`` if absent)."""
        return None

    # --- helpers ------------------------------------------------------
    def relative_gap(self, x, y):
        """``(gap_modified / (1 + |objective|), objective)``."""
        obj = self.objective(x)
        g = self.gap_modified(x, y)
        return g / (1.0 + abs(obj)), obj

    def _ball_indicator(self, u):
        return 0.0 if within(grid.norm_l2(u - self.u0), self.spec.delta1) else math.inf


def _linf_indicator(x, radius):
    return 0.0 if within(grid.mixed_norm_linf(x), radius) else math.inf


def _check_dual(x, radius, name):
    val = grid.mixed_norm_linf(x)
    if val > radius * (1.0 + DUAL_RTOL) + FEAS_ATOL:
        raise InfeasibleDual(f"{name} has pointwise norm {val:.6g} > {radius:.6g}")


def _rescale(q, bound):
    """``q / max(1, |||E^T q|||_inf / bound)`` and the matching ``E^T`` image."""
    etq = grid.symgrad_adjoint(q)
    scale = max(1.0, grid.mixed_norm_linf(etq) / bound)
    return q / scale, etq / scale


class ImageStage(SaddleProblem):
    """TV denoising towards a gradient estimate (DGTV2; ROF with ``v_hat = 0``)."""

    formulation = "U"
    primal_parts = (0,)
    dual_parts = (2,)
    norm_sq_hint = 8.0

    def __init__(self, spec):
        super().__init__(spec)
        self.v_hat = spec.v_hat if spec.v_hat is not None else np.zeros((2,) + self.shape)

    def initial_primal(self):
        return self.u0.ravel().copy()

    def K(self, x):
        (u,) = self.split_primal(x)
        return grid.grad(u).ravel()

    def Kt(self, y):
        (p,) = self.split_dual(y)
        return grid.grad_adjoint(p).ravel()

    def prox_F(self, x, tau):
        (u,) = self.split_primal(x)
        return project_l2_ball(u, self.u0, self.spec.delta1).ravel()

    def prox_Gconj(self, y, sigma):
        (p,) = self.split_dual(y)
        return project_linf_l2_ball(p - sigma * self.v_hat, 1.0).ravel()

    def objective(self, x):
        (u,) = self.split_primal(x)
        return self._ball_indicator(u) + grid.mixed_norm_l1(grid.grad(u) - self.v_hat)

    def _dual_terms(self, p):
        divp = grid.divergence(p)
        return (self.spec.delta1 * grid.norm_l2(divp) + grid.inner(self.u0, divp)
                + grid.inner(self.v_hat, p))

    def gap(self, x, y):
        (p,) = self.split_dual(y)
        return self.objective(x) + self._dual_terms(p) + _linf_indicator(p, 1.0)

    def gap_modified(self, x, y):
        (p,) = self.split_dual(y)
        _check_dual(p, 1.0, "p")
        p = p / max(1.0, grid.mixed_norm_linf(p))
        return self.objective(x) + self._dual_terms(p)

    def image(self, x):
        return self.split_primal(x)[0]


class GradientConstrained(SaddleProblem):
    """DGTV stage 1: ``min |||E v|||_1`` s.t. ``|||grad u0 - v|||_1 <= delta2``."""

    formulation = "V"
    primal_parts = (2,)
    dual_parts = (4,)
    norm_sq_hint = 8.0

    def initial_primal(self):
        return self._grad_u0.ravel().copy()

    def K(self, x):
        (v,) = self.split_primal(x)
        return grid.symgrad(v).ravel()

    def Kt(self, y):
        (q,) = self.split_dual(y)
        return grid.symgrad_adjoint(q).ravel()

    def prox_F(self, x, tau):
        (v,) = self.split_primal(x)
        return project_l1_l2_ball(v, self.spec.delta2, center=self._grad_u0).ravel()

    def prox_Gconj(self, y, sigma):
        (q,) = self.split_dual(y)
        return project_linf_l2_ball(q, 1.0).ravel()

    def objective(self, x):
        (v,) = self.split_primal(x)
        ind = 0.0 if within(grid.mixed_norm_l1(self._grad_u0 - v), self.spec.delta2) else math.inf
        return ind + grid.mixed_norm_l1(grid.symgrad(v))

    def _dual_terms(self, q):
        etq = grid.symgrad_adjoint(q)
        return self.spec.delta2 * grid.mixed_norm_linf(etq) - grid.inner(etq, self._grad_u0)

    def gap(self, x, y):
        (q,) = self.split_dual(y)
        return self.objective(x) + self._dual_terms(q) + _linf_indicator(q, 1.0)

    def gap_modified(self, x, y):
        (q,) = self.split_dual(y)
        _check_dual(q, 1.0, "q")
        return self.objective(x) + self._dual_terms(q / max(1.0, grid.mixed_norm_linf(q)))

    def gradient_field(self, x):
        return self.split_primal(x)[0]


class GradientPenalized(SaddleProblem):
    """DGTGV stage 1 in the variable ``w = grad u0 - v``."""

    formulation = "V"
    primal_parts = (2,)
    dual_parts = (4,)
    norm_sq_hint = 8.0

    def __init__(self, spec):
        super().__init__(spec)
        self._hess_u0 = grid.symgrad(self._grad_u0)

    def initial_primal(self):
        return self.primal_layout.zeros()

    def K(self, x):
        (w,) = self.split_primal(x)
        return grid.symgrad(w).ravel()

    def Kt(self, y):
        (q,) = self.split_dual(y)
        return grid.symgrad_adjoint(q).ravel()

    def prox_F(self, x, tau):
        (w,) = self.split_primal(x)
        return group_soft_threshold(w, tau).ravel()

    def prox_Gconj(self, y, sigma):
        (q,) = self.split_dual(y)
        return project_linf_l2_ball(q - sigma * self._hess_u0, self.spec.alpha).ravel()

    def objective(self, x):
        (w,) = self.split_primal(x)
        return (grid.mixed_norm_l1(w)
                + self.spec.alpha * grid.mixed_norm_l1(self._hess_u0 - grid.symgrad(w)))

    def gap(self, x, y):
        (q,) = self.split_dual(y)
        etq = grid.symgrad_adjoint(q)
        return (self.objective(x) + _linf_indicator(etq, 1.0)
                + _linf_indicator(q, self.spec.alpha) + grid.inner(self._hess_u0, q))

    def gap_modified(self, x, y):
        (q,) = self.split_dual(y)
        _check_dual(q, self.spec.alpha, "q")
        qt, _ = _rescale(q, 1.0)
        return self.objective(x) + grid.inner(self._hess_u0, qt)

    def gradient_field(self, x):
        return self._grad_u0 - self.split_primal(x)[0]


class _UVProblem(SaddleProblem):
    """Shared pieces of TGV and MTGV: ``K(u, v) = (grad u - v, E v)``."""

    formulation = "UV"
    primal_parts = (0, 2)
    dual_parts = (2, 4)
    norm_sq_hint = 12.0
    # bounds on |p| and |q|
    p_bound = q_bound = None

    def initial_primal(self):
        return self.join_primal(self.u0, np.zeros((2,) + self.shape))

    def K(self, x):
        u, v = self.split_primal(x)
        return self.join_dual(grid.grad(u) - v, grid.symgrad(v))

    def Kt(self, y):
        p, q = self.split_dual(y)
        return self.join_primal(grid.grad_adjoint(p), grid.symgrad_adjoint(q) - p)

    def prox_Gconj(self, y, sigma):
        p, q = self.split_dual(y)
        return self.join_dual(project_linf_l2_ball(p, self.p_bound),
                              project_linf_l2_ball(q, self.q_bound))

    def _regularizer(self, u, v):
        return (self.weight_first * grid.mixed_norm_l1(grid.grad(u) - v)
                + self.q_bound * grid.mixed_norm_l1(grid.symgrad(v)))

    def gap(self, x, y):
        p, q = self.split_dual(y)
        coupled = np.allclose(p, grid.symgrad_adjoint(q), rtol=0.0, atol=1e-12)
        ind = 0.0 if coupled else math.inf
        return (self.objective(x) + self._data_conj(p) + ind
                + _linf_indicator(p, self.p_bound) + _linf_indicator(q, self.q_bound))

    def gap_modified(self, x, y):
        _, q = self.split_dual(y)
        _check_dual(q, self.q_bound, "q")
        _, pt = _rescale(q, self.p_bound)
        return self.objective(x) + self._data_conj(pt)

    def image(self, x):
        return self.split_primal(x)[0]

    def gradient_field(self, x):
        return self.split_primal(x)[1]


class TGVProblem(_UVProblem):
    """Tikhonov-type TGV denoising with weights ``(alpha0, alpha1)``."""

    def __init__(self, spec):
        super().__init__(spec)
        self.weight_first = self.p_bound = spec.alpha1
        self.q_bound = spec.alpha0

    def prox_F(self, x, tau):
        u, v = self.split_primal(x)
        return self.join_primal(prox_tgv_data(u, self.u0, tau), v)

    def objective(self, x):
        u, v = self.split_primal(x)
        d = u - self.u0
        return self._regularizer(u, v) + 0.5 * float(np.sum(d * d))

    def _data_conj(self, p):
        # F*(-K^T y) with p coupled to q
        gtp = grid.grad_adjoint(p)
        return 0.5 * float(np.sum(gtp * gtp)) - grid.inner(p, self._grad_u0)


class MTGVProblem(_UVProblem):
    """Morozov-type TGV: TGV with weights ``(alpha, 1)`` under a noise constraint."""

    def __init__(self, spec):
        super().__init__(spec)
        self.weight_first = self.p_bound = 1.0
        self.q_bound = spec.alpha

    def prox_F(self, x, tau):
        u, v = self.split_primal(x)
        return self.join_primal(project_l2_ball(u, self.u0, self.spec.delta1), v)

    def objective(self, x):
        u, v = self.split_primal(x)
        return self._ball_indicator(u) + self._regularizer(u, v)

    def _data_conj(self, p):
        gtp = grid.grad_adjoint(p)
        return self.spec.delta1 * grid.norm_l2(gtp) - grid.inner(p, self._grad_u0)


class _UWProblem(SaddleProblem):
    """Shared pieces of MTGV_W and CTGV: ``K(u, w) = E(grad u - w)``."""

    formulation = "UW"
    primal_parts = (0, 2)
    dual_parts = (4,)
    norm_sq_hint = None

    def initial_primal(self):
        return self.join_primal(self.u0, np.zeros((2,) + self.shape))

    def K(self, x):
        u, w = self.split_primal(x)
        return grid.symgrad(grid.grad(u) - w).ravel()

    def Kt(self, y):
        (q,) = self.split_dual(y)
        etq = grid.symgrad_adjoint(q)
        return self.join_primal(grid.grad_adjoint(etq), -etq)

    def _residual_norm(self, u, w):
        return grid.mixed_norm_l1(grid.symgrad(grid.grad(u) - w))

    def image(self, x):
        return self.split_primal(x)[0]

    def gradient_field(self, x):
        u, w = self.split_primal(x)
        return grid.grad(u) - w


class MTGVWProblem(_UWProblem):
    """MTGV after the change of variables ``w = grad u - v``."""

    def prox_F(self, x, tau):
        u, w = self.split_primal(x)
        return self.join_primal(project_l2_ball(u, self.u0, self.spec.delta1),
                                group_soft_threshold(w, tau))

    def prox_Gconj(self, y, sigma):
        (q,) = self.split_dual(y)
        return project_linf_l2_ball(q, self.spec.alpha).ravel()

    def objective(self, x):
        u, w = self.split_primal(x)
        return (self._ball_indicator(u) + grid.mixed_norm_l1(w)
                + self.spec.alpha * self._residual_norm(u, w))

    def _dual_terms(self, etq):
        return (self.spec.delta1 * grid.norm_l2(grid.grad_adjoint(etq))
                - grid.inner(etq, self._grad_u0))

    def gap(self, x, y):
        (q,) = self.split_dual(y)
        etq = grid.symgrad_adjoint(q)
        return (self.objective(x) + self._dual_terms(etq) + _linf_indicator(etq, 1.0)
                + _linf_indicator(q, self.spec.alpha))

    def gap_modified(self, x, y):
        (q,) = self.split_dual(y)
        _check_dual(q, self.spec.alpha, "q")
        _, etq = _rescale(q, 1.0)
        return self.objective(x) + self._dual_terms(etq)


class CTGVProblem(_UWProblem):
    """TGV with both the data fit and the first-order term as constraints."""

    def prox_F(self, x, tau):
        u, w = self.split_primal(x)
        return self.join_primal(project_l2_ball(u, self.u0, self.spec.delta1),
                                project_l1_l2_ball(w, self.spec.delta2))

    def prox_Gconj(self, y, sigma):
        (q,) = self.split_dual(y)
        return project_linf_l2_ball(q, 1.0).ravel()

    def objective(self, x):
        u, w = self.split_primal(x)
        ind = 0.0 if within(grid.mixed_norm_l1(w), self.spec.delta2) else math.inf
        return self._ball_indicator(u) + ind + self._residual_norm(u, w)

    def _dual_terms(self, q):
        etq = grid.symgrad_adjoint(q)
        return (self.spec.delta1 * grid.norm_l2(grid.grad_adjoint(etq))
                - grid.inner(etq, self._grad_u0)
                + self.spec.delta2 * grid.mixed_norm_linf(etq))

    def gap(self, x, y):
        (q,) = self.split_dual(y)
        return self.objective(x) + self._dual_terms(q) + _linf_indicator(q, 1.0)

    def gap_modified(self, x, y):
        (q,) = self.split_dual(y)
        _check_dual(q, 1.0, "q")
        return self.objective(x) + self._dual_terms(q / max(1.0, grid.mixed_norm_linf(q)))


_CLASSES = {
    "ROF_CONSTRAINED": ImageStage,
    "DGTV2": ImageStage,
    "DGTV1": GradientConstrained,
    "DGTGV1": GradientPenalized,
    "TGV": TGVProblem,
    "MTGV": MTGVProblem,
    "MTGV_W": MTGVWProblem,
    "CTGV": CTGVProblem,
}


def make_problem(spec):
    """Build the :class:`SaddleProblem` for ``spec.variant``."""
    return _CLASSES[spec.variant](spec)


def _as_problem(p):
    return p if isinstance(p, SaddleProblem) else make_problem(p)


def apply_K(problem, x):
    return _as_problem(problem).K(x)


def apply_Kadj(problem, y):
    return _as_problem(problem).Kt(y)


def primal_objective(problem, x):
    return _as_problem(problem).objective(x)


def gap(problem, x, y):
    return _as_problem(problem).gap(x, y)


def gap_modified(problem, x, y):
    return _as_problem(problem).gap_modified(x, y)


def to_w_variables(u, v):
    """``(u, v) -> (u, grad u - v)``."""
    return u, grid.grad(u) - v


def from_w_variables(u, w):
    """``(u, w) -> (u, grad u - w)``."""
    return u, grid.grad(u) - w
