"""Total-variation family image denoising with gradient estimates.

Two-stage (DGTV, DGTGV) and combined (TGV, MTGV, CTGV) models solved by
Chambolle-Pock or by (inexact, preconditioned) Douglas-Rachford.
"""

from .problems import ProblemSpec, make_problem
from .solvers import SolverConfig, SolveReport, chambolle_pock, douglas_rachford, solve
from .pipeline import denoise, estimate_noise_mad, psnr, run_two_stage

__all__ = [
    "ProblemSpec", "make_problem", "SolverConfig", "SolveReport",
    "chambolle_pock", "douglas_rachford", "solve", "denoise",
    "estimate_noise_mad", "psnr", "run_two_stage",
]
__version__ = "0.1.0"
