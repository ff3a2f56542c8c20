"""Chambolle-Pock and Douglas-Rachford solvers for :mod:`tgvd.problems`.

Both solvers stop on the relative modified duality gap
``gap / (1 + |objective|)`` evaluated every ``gap_check_every`` iterations
at post-prox iterates, so indicator terms are finite.
"""

from dataclasses import dataclass, field, replace
import logging
import math
import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import sparse as sparse_ops
from .problems import SaddleProblem, make_problem

logger = logging.getLogger(__name__)

ALGORITHMS = ("CP", "DR_EXACT", "DR_INEXACT")
PRECONDITIONERS = ("NONE", "ICHOL_BLOCK")

# Step sizes tuned by hand on 256x256 test images (CP: tau, DR: (s, t)).
CP_TAU = {"TGV": 0.008, "MTGV": 0.004,
          # tuned on small test images; primal steps well below 1/||K|| pay off
          "ROF_CONSTRAINED": 0.01, "DGTV2": 0.01, "DGTV1": 0.01, "DGTGV1": 0.01,
          "MTGV_W": 0.003, "CTGV": 0.003}
DR_STEPS = {"TGV": (60.0, 0.28), "MTGV": (60.0, 0.1), "MTGV_W": (60.0, 0.04)}
DR_STEPS_FALLBACK = (10.0, 0.1)

# power-iteration estimate replaces the nominal norm beyond this mismatch
NORM_HINT_RTOL = 0.05


class SolverError(RuntimeError):
    pass


class StepSizeError(SolverError):
    pass


class NonFiniteIterate(SolverError):
    def __init__(self, iteration):
        super().__init__(f"non-finite iterate at iteration {iteration}")
        self.iteration = iteration


@dataclass
class SolverConfig:
    """Algorithm choice and its parameters; ``None`` steps use defaults."""

    algorithm: str = "CP"
    tau: float = None
    sigma: float = None
    s: float = None
    t: float = None
    rho: float = 1.0
    pcg_iters: int = 2
    preconditioner: str = "ICHOL_BLOCK"
    gap_tol: float = 1e-3
    max_iters: int = 10000
    gap_check_every: int = 10
    literal_uw: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if not 0 < self.rho < 2:
            raise ValueError("relaxation rho must lie in (0, 2)")
        for name in ("tau", "sigma", "s", "t"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")
        if self.pcg_iters < 1 or self.max_iters < 1 or self.gap_check_every < 1:
            raise ValueError("iteration counts must be >= 1")
        if not self.gap_tol > 0:
            raise ValueError("gap_tol must be positive")

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class SolveReport:
    problem: SaddleProblem
    x: np.ndarray
    y: np.ndarray
    iterations: int
    wall_time: float
    gap_trace: list = field(default_factory=list)  # (iteration, relative gap)
    objective: float = math.nan
    converged: bool = False
    config: SolverConfig = None
    linear_warnings: int = 0

    @property
    def relative_gap(self):
        return self.gap_trace[-1][1]

    @property
    def u(self):
        return self.problem.image(self.x)

    @property
    def v(self):
        return self.problem.gradient_field(self.x)


def _as_problem(problem):
    return problem if isinstance(problem, SaddleProblem) else make_problem(problem)


def power_iteration_norm(problem, iters=200, seed=0):
    """Estimate ``||K||^2`` by power iteration on ``K^T K``."""
    problem = _as_problem(problem)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(problem.primal_layout.size)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        x = problem.Kt(problem.K(x))
        lam = float(np.linalg.norm(x))
        if lam == 0.0:
            return 0.0
        x /= lam
    return lam


_NORM_CACHE = {}


def _estimated_norm_sq(problem):
    # K depends on the variant and the grid only, not on the data
    key = (type(problem), problem.shape)
    if key not in _NORM_CACHE:
        _NORM_CACHE[key] = power_iteration_norm(problem)
    return _NORM_CACHE[key]


def operator_norm_sq(problem):
    """``||K||^2`` used for step sizes.

    The nominal value of the problem class is kept unless the power
    iteration estimate differs by more than 5%; the estimate then gets a
    1% safety margin.
    """
    est = _estimated_norm_sq(problem)
    hint = problem.norm_sq_hint
    if hint is not None and abs(est - hint) <= NORM_HINT_RTOL * hint:
        return hint
    return 1.01 * est


def cp_steps(problem, config):
    L2 = operator_norm_sq(problem)
    tau = config.tau
    if tau is None:
        tau = CP_TAU.get(problem.spec.variant, 1.0 / math.sqrt(L2))
    sigma = config.sigma if config.sigma is not None else 1.0 / (tau * L2)
    if tau * sigma * L2 > 1.0 + 1e-9:
        raise StepSizeError(f"tau*sigma*||K||^2 = {tau * sigma * L2:.4g} > 1")
    return tau, sigma


def dr_steps(problem, config):
    s0, t0 = DR_STEPS.get(problem.spec.variant, DR_STEPS_FALLBACK)
    return (config.s if config.s is not None else s0,
            config.t if config.t is not None else t0)


def _check_finite(it, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteIterate(it)


class _GapMonitor:
    def __init__(self, problem, config, report):
        self.problem = problem
        self.config = config
        self.report = report

    def __call__(self, it, x, y, force=False):
        """Record the gap when due; return True once converged."""
        if not force and it % self.config.gap_check_every:
            return False
        _check_finite(it, x, y)
        rel, obj = self.problem.relative_gap(x, y)
        if not math.isfinite(rel):
            raise NonFiniteIterate(it)
        trace = self.report.gap_trace
        if trace and trace[-1][0] == it:
            trace[-1] = (it, rel)
        else:
            trace.append((it, rel))
        self.report.objective = obj
        return rel <= self.config.gap_tol


_MATRIX_CACHE = {}


def assembled_operators(problem):
    """Sparse ``(K, K^T)`` of ``problem``; much cheaper per product than the
    matrix-free operators on small and medium grids."""
    key = (problem.formulation, problem.shape)
    if key not in _MATRIX_CACHE:
        K = sparse_ops.assemble_K(problem.formulation, *problem.shape)
        _MATRIX_CACHE[key] = (K, K.T.tocsr())
    return _MATRIX_CACHE[key]


def chambolle_pock(problem, config=None, x0=None, y0=None, callback=None):
    """Primal-dual iteration with constant steps and extrapolation 1.

    ``callback(it, x, y)`` runs after every iteration; a truthy return
    value stops the solve.
    """
    problem = _as_problem(problem)
    config = config or SolverConfig()
    tau, sigma = cp_steps(problem, config)
    K, Kt = assembled_operators(problem)
    x = problem.initial_primal() if x0 is None else np.array(x0, dtype=float)
    y = problem.initial_dual() if y0 is None else np.array(y0, dtype=float)
    x = problem.prox_F(x, tau)
    report = SolveReport(problem, x, y, 0, 0.0, config=config)
    monitor = _GapMonitor(problem, config, report)
    start = time.perf_counter()
    xbar = x
    it = 0
    converged = False
    while it < config.max_iters:
        it += 1
        y = problem.prox_Gconj(y + sigma * (K @ xbar), sigma)
        x_new = problem.prox_F(x - tau * (Kt @ y), tau)
        xbar = 2.0 * x_new - x
        x = x_new
        if monitor(it, x, y):
            converged = True
            break
        if callback is not None and callback(it, x, y):
            break
    if not converged:
        converged = monitor(it, x, y, force=True)
    report.x, report.y, report.iterations = x, y, it
    report.converged = converged
    report.wall_time = time.perf_counter() - start
    return report


class LinearResolvent:
    """Solves ``(I + s t K^T K) x = b`` exactly or by a few PCG steps."""

    def __init__(self, problem, s, t, mode="EXACT", pcg_iters=2,
                 preconditioner="ICHOL_BLOCK", literal_uw=True, A=None):
        self.problem = problem
        M, N = problem.shape
        st = s * t
        self.A = A if A is not None else sparse_ops.assemble_ktk(problem.formulation, M, N, st)
        self.mode = mode
        self.pcg_iters = pcg_iters
        self.warnings = 0
        self._x = None
        if mode == "EXACT":
            self._lu = spla.splu(sp.csc_matrix(self.A))
            self.M = None
        elif mode == "PCG":
            if preconditioner == "ICHOL_BLOCK":
                self.M = sparse_ops.block_preconditioner(
                    problem.formulation, M, N, st, literal_uw=literal_uw)
            else:
                self.M = None
        else:
            raise ValueError(f"unknown mode {mode!r}")

    def __call__(self, b, warm_start=None):
        if self.mode == "EXACT":
            x = self._lu.solve(b)
        else:
            x0 = warm_start if warm_start is not None else self._x
            x = self.pcg(b, x0, self.pcg_iters)
        self._x = x
        return x

    def pcg(self, b, x0, iters):
        """``iters`` preconditioned CG steps from ``x0``."""
        A, M = self.A, self.M
        x = np.zeros_like(b) if x0 is None else x0.copy()
        r = b - A @ x
        z = M(r) if M is not None else r.copy()
        p = z
        rz = float(r @ z)
        for i in range(iters):
            if rz == 0.0:
                break
            Ap = A @ p
            pAp = float(p @ Ap)
            if not pAp > 0.0 or not math.isfinite(pAp):
                self.warnings += 1
                logger.warning("PCG breakdown (p^T A p = %g); keeping best iterate", pAp)
                break
            a = rz / pAp
            x += a * p
            if i + 1 < iters:
                r -= a * Ap
                z = M(r) if M is not None else r.copy()
                rz_new = float(r @ z)
                p = z + (rz_new / rz) * p
                rz = rz_new
        return x


def resolvent_linear(problem, rhs, s, t, mode="EXACT", pcg_iters=2,
                     preconditioner="ICHOL_BLOCK", warm_start=None):
    """One-off solve of ``(I + s t K^T K) x = rhs``."""
    solver = LinearResolvent(_as_problem(problem), s, t, mode, pcg_iters, preconditioner)
    return solver(rhs, warm_start=warm_start)


def douglas_rachford(problem, config=None, x0=None, y0=None, callback=None,
                     linear_solver=None):
    """Relaxed Douglas-Rachford on the primal-dual optimality system.

    The nonlinear resolvent applies ``prox_{tF}`` and ``prox_{sG*}``; the
    linear one inverts ``[[I, t K^T], [-s K, I]]`` through a single solve
    with ``I + s t K^T K``.  The monitored iterate is the prox output.
    """
    problem = _as_problem(problem)
    config = config or SolverConfig(algorithm="DR_EXACT")
    s, t = dr_steps(problem, config)
    rho = config.rho
    K, Kt = assembled_operators(problem)
    if linear_solver is None:
        mode = "EXACT" if config.algorithm != "DR_INEXACT" else "PCG"
        linear_solver = LinearResolvent(problem, s, t, mode, config.pcg_iters,
                                        config.preconditioner, config.literal_uw)
    zx = problem.initial_primal() if x0 is None else np.array(x0, dtype=float)
    zy = problem.initial_dual() if y0 is None else np.array(y0, dtype=float)
    report = SolveReport(problem, zx, zy, 0, 0.0, config=config)
    monitor = _GapMonitor(problem, config, report)
    start = time.perf_counter()
    it = 0
    converged = False
    xb, yb = zx, zy
    while it < config.max_iters:
        it += 1
        xb = problem.prox_F(zx, t)
        yb = problem.prox_Gconj(zy, s)
        if monitor(it, xb, yb):
            converged = True
            break
        if callback is not None and callback(it, xb, yb):
            break
        a = 2.0 * xb - zx
        b = 2.0 * yb - zy
        xa = linear_solver(a - t * (Kt @ b))
        ya = b + s * (K @ xa)
        zx = zx + rho * (xa - xb)
        zy = zy + rho * (ya - yb)
    if not converged:
        converged = monitor(it, xb, yb, force=True)
    report.x, report.y, report.iterations = xb, yb, it
    report.converged = converged
    report.linear_warnings = getattr(linear_solver, "warnings", 0)
    report.wall_time = time.perf_counter() - start
    return report


def solve(problem, config=None, **kwargs):
    """Dispatch on ``config.algorithm``."""
    config = config or SolverConfig()
    if config.algorithm == "CP":
        return chambolle_pock(problem, config, **kwargs)
    return douglas_rachford(problem, config, **kwargs)
