"""Parameter-free denoising runs and the benchmark harness.

Noise "factor" means the standard deviation of additive Gaussian noise on
images with intensities in ``[0, 1]``.
"""

from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, field
import logging
import math
import os
import time
import zlib

import numpy as np

from . import grid
from .problems import ProblemSpec, make_problem
from .solvers import SolverConfig, solve

logger = logging.getLogger(__name__)

# default constants
C_DEFAULT = 0.99
ALPHA_DGTGV = 1.0
ALPHA_MTGV = 2.0

METHODS = ("tv", "dgtv", "dgtgv", "mtgv", "mtgv_w", "ctgv", "tgv")
CSV_HEADER = ("image", "factor", "method", "alpha", "psnr_db", "time_s", "iters")
TRACE_HEADER = ("iter", "relative_gap")

MAD_SCALE = 0.6745


@dataclass(frozen=True)
class NoiseEstimate:
    sigma: float
    delta1: float

    @classmethod
    def from_sigma(cls, sigma, shape):
        return cls(float(sigma), float(sigma) * math.sqrt(shape[0] * shape[1]))


def estimate_noise_mad(u0):
    """Median absolute deviation of the finest diagonal wavelet-like residual.

    The residual ``u[i+1,j+1] - u[i+1,j] - u[i,j+1] + u[i,j]`` is divided
    by 2 (its l2 gain) so pure noise keeps its standard deviation.
    """
    u0 = grid.check_scalar(u0)
    if min(u0.shape) < 4:
        raise ValueError("noise estimation needs at least a 4x4 image")
    d = 0.5 * (u0[1:, 1:] - u0[1:, :-1] - u0[:-1, 1:] + u0[:-1, :-1])
    sigma = float(np.median(np.abs(d))) / MAD_SCALE
    return NoiseEstimate.from_sigma(sigma, u0.shape)


def _solve_rof(u0, delta1, config):
    spec = ProblemSpec("ROF_CONSTRAINED", u0, delta1=delta1)
    return solve(make_problem(spec), config)


def default_params(variant, u0, estimate=None, config=None, **overrides):
    """Fully populated :class:`ProblemSpec` with the parameter-free defaults.

    ``delta1`` comes from the noise estimate, ``delta2 = c |||grad u0|||_1``
    with ``c = 0.99`` (DGTV1), ``alpha = 1`` for DGTGV1 and ``alpha = 2``
    for MTGV.  TGV uses ``(alpha0, alpha1) = (2 sigma, sigma)``.  CTGV
    takes ``delta2 = c |||grad u_TV|||_1`` from a TV-denoised image, which
    requires a solve with ``config``.  Keyword overrides win.
    """
    u0 = grid.check_scalar(u0)
    if estimate is None:
        estimate = estimate_noise_mad(u0)
    c = overrides.pop("c", None)
    c = C_DEFAULT if c is None else c
    kw = {}
    if variant in ("ROF_CONSTRAINED", "DGTV2", "MTGV", "MTGV_W", "CTGV"):
        kw["delta1"] = estimate.delta1
    if variant == "DGTV1":
        kw["delta2"] = c * grid.mixed_norm_l1(grid.grad(u0))
        kw["c"] = c
    if variant == "DGTV2":
        kw["v_hat"] = np.zeros((2,) + u0.shape)
    if variant == "DGTGV1":
        kw["alpha"] = ALPHA_DGTGV
    if variant in ("MTGV", "MTGV_W"):
        kw["alpha"] = ALPHA_MTGV
    if variant == "TGV":
        sig = max(estimate.sigma, 1e-3)
        kw["alpha0"], kw["alpha1"] = 2.0 * sig, sig
    kw.update({k: v for k, v in overrides.items() if v is not None})
    if variant == "CTGV" and kw.get("delta2") is None:
        u_tv = _solve_rof(u0, kw["delta1"], config or SolverConfig()).u
        kw["delta2"] = c * grid.mixed_norm_l1(grid.grad(u_tv))
        kw["c"] = c
    return ProblemSpec(variant, u0, **kw)


@dataclass
class DenoiseResult:
    method: str
    u: np.ndarray
    reports: list
    alpha: float = math.nan
    v: np.ndarray = None

    @property
    def wall_time(self):
        return sum(r.wall_time for r in self.reports)

    @property
    def iterations(self):
        return sum(r.iterations for r in self.reports)

    @property
    def converged(self):
        return all(r.converged for r in self.reports)


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage {stage}: {exc}")
        self.stage = stage


def run_two_stage(kind, u0, config=None, estimate=None, alpha=None, c=None,
                  delta1=None, stage2_config=None):
    """Denoise the gradient, then the image towards it (DGTV or DGTGV).

    Returns a :class:`DenoiseResult` holding both solve reports, gradient
    stage first.
    """
    kind = kind.upper()
    if kind not in ("DGTV", "DGTGV"):
        raise ValueError(f"two-stage kind must be DGTV or DGTGV, got {kind!r}")
    config = config or SolverConfig()
    stage2_config = stage2_config or config
    u0 = grid.check_scalar(u0)
    if estimate is None:
        estimate = estimate_noise_mad(u0)
    if kind == "DGTV":
        spec1 = default_params("DGTV1", u0, estimate, c=c)
        used = spec1.c
    else:
        spec1 = default_params("DGTGV1", u0, estimate, alpha=alpha)
        used = spec1.alpha
    try:
        rep1 = solve(make_problem(spec1), config)
    except Exception as exc:
        raise StageError(1, exc) from exc
    v_hat = rep1.v
    spec2 = default_params("DGTV2", u0, estimate, delta1=delta1, v_hat=v_hat)
    try:
        rep2 = solve(make_problem(spec2), stage2_config)
    except Exception as exc:
        raise StageError(2, exc) from exc
    return DenoiseResult(kind.lower(), rep2.u, [rep1, rep2], used, v_hat)


_SINGLE = {"tv": "ROF_CONSTRAINED", "mtgv": "MTGV", "mtgv_w": "MTGV_W",
           "ctgv": "CTGV", "tgv": "TGV"}


def denoise(method, u0, config=None, estimate=None, **params):
    """Run one named method with defaults, ``params`` overriding them."""
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method in ("dgtv", "dgtgv"):
        return run_two_stage(method, u0, config, estimate, alpha=params.get("alpha"),
                             c=params.get("c"), delta1=params.get("delta1"))
    config = config or SolverConfig()
    spec = default_params(_SINGLE[method], u0, estimate, config=config, **params)
    rep = solve(make_problem(spec), config)
    alpha = spec.alpha if spec.alpha is not None else (spec.alpha0 or math.nan)
    return DenoiseResult(method, rep.u, [rep], alpha, rep.v)


def psnr(u, ref, peak=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    err = float(np.sum((np.asarray(u, float) - np.asarray(ref, float)) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak ** 2 * np.size(ref) / err)


def format_psnr(value):
    return "exact" if value == math.inf else f"{value:.4f}"


# --- test images --------------------------------------------------------

def synthetic_image(name, size=128):
    """Deterministic grayscale test image in ``[0, 1]``."""
    n = size
    i, j = np.mgrid[0:n, 0:n] / (n - 1)
    if name == "affine":
        u = 0.1 + 0.5 * i + 0.3 * j
        u = np.where(j > 0.6 - 0.3 * i, u, 0.9 - 0.4 * i - 0.2 * j)
    elif name == "eye":
        r = np.hypot(i - 0.5, j - 0.5)
        u = np.full((n, n), 0.85)
        u = np.where(r < 0.38, 0.55 + 0.3 * (0.38 - r), u)
        u = np.where(r < 0.2, 0.3 - 0.5 * (0.2 - r), u)
        u = np.where(r < 0.08, 0.05, u)
        u = u + 0.05 * np.exp(-((i - 0.42) ** 2 + (j - 0.42) ** 2) / 0.002)
    elif name == "smooth":
        u = 0.5 + 0.25 * np.sin(3 * np.pi * i) * np.cos(2 * np.pi * j)
        u = np.where((i > 0.25) & (i < 0.7) & (j > 0.3) & (j < 0.75), u + 0.2 * j, u)
    else:
        raise ValueError(f"unknown synthetic image {name!r}")
    return np.clip(u, 0.0, 1.0)


SYNTHETIC = ("affine", "eye", "smooth")


def synthetic_set(size=128, names=SYNTHETIC):
    return {name: synthetic_image(name, size) for name in names}


def noise_rng(image_id, factor, seed):
    """Counter-based generator keyed by ``(image_id, factor, seed)``."""
    key = zlib.crc32(f"{image_id}|{factor!r}|{seed}".encode())
    return np.random.Generator(np.random.Philox(key=[key, seed]))


def add_noise(u, factor, image_id="", seed=0):
    return u + factor * noise_rng(image_id, factor, seed).standard_normal(u.shape)


# --- benchmark ------------------------------------------------------------

@dataclass
class BenchmarkRow:
    image: str
    factor: float
    method: str
    alpha: float
    psnr_db: float
    time_s: float
    iters: int
    noisy_psnr_db: float = math.nan
    stage_times: tuple = ()
    gap_traces: list = field(default_factory=list, repr=False)
    error: str = ""

    def csv_fields(self):
        return (self.image, repr(self.factor), self.method, f"{self.alpha:g}",
                format_psnr(self.psnr_db), f"{self.time_s:.4f}", str(self.iters))


def _workers():
    try:
        return max(1, int(os.environ.get("TGVD_THREADS", "1")))
    except ValueError:
        return 1


def _bench_one(name, ref, factor, method, config, seed, params):
    u0 = add_noise(ref, factor, name, seed)
    row = BenchmarkRow(name, factor, method, math.nan, math.nan, math.nan, 0,
                       noisy_psnr_db=psnr(u0, ref))
    try:
        res = denoise(method, u0, config, **params)
    except Exception as exc:  # recorded, the harness keeps going
        logger.error("%s(%s) %s failed: %s", name, factor, method, exc)
        row.error = str(exc)
        return row
    row.alpha = res.alpha
    row.psnr_db = psnr(res.u, ref)
    row.time_s = res.wall_time
    row.iters = res.iterations
    row.stage_times = tuple(r.wall_time for r in res.reports)
    row.gap_traces = [r.gap_trace for r in res.reports]
    return row


def run_benchmark(images, factors, methods, config=None, seed=0, params=None,
                  workers=None):
    """Noise, estimate and denoise every (image, factor, method) triple.

    ``images`` maps ids to clean images; ``params`` optionally maps a
    method to parameter overrides.  Rows come back sorted by
    ``(image, factor, method)``.
    """
    config = config or SolverConfig()
    params = params or {}
    jobs = [(name, ref, f, m) for name, ref in images.items()
            for f in factors for m in methods]
    workers = workers or _workers()

    def run(job):
        name, ref, f, m = job
        return _bench_one(name, ref, f, m, config, seed, params.get(m, {}))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(j) for j in jobs]
    return sorted(rows, key=lambda r: (r.image, r.factor, r.method))


@dataclass
class SweepResult:
    image: str
    factor: float
    best: float
    best_psnr_db: float
    psnr_by_value: dict


def alpha_sweep(method, images, factors, values, config=None, seed=0):
    """Best parameter by PSNR for every (image, factor).

    Sweeps ``alpha`` for dgtgv/mtgv/mtgv_w, and ``c`` for dgtv.
    """
    config = config or SolverConfig()
    key = "c" if method == "dgtv" else "alpha"
    out = []
    for name, ref in images.items():
        for f in factors:
            u0 = add_noise(ref, f, name, seed)
            est = estimate_noise_mad(u0)
            scores = {}
            for val in values:
                res = denoise(method, u0, config, est, **{key: val})
                scores[val] = psnr(res.u, ref)
            best = max(scores, key=lambda k: scores[k])
            out.append(SweepResult(name, f, best, scores[best], scores))
    return out


def save_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(row.csv_fields())


def save_trace(report, path):
    """Two-column CSV ``iter,relative_gap``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for it, rel in report.gap_trace:
            writer.writerow((it, repr(float(rel))))
