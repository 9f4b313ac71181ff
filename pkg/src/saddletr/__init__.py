"""Riemannian trust-region methods for strict saddle functions."""

from .driver import (TrConfig, TerminationReport, IterationRecord, classify_region, run_exact_rtr,
                     run_inexact_rtr, acceptance_and_radius_update)
from .manifolds import Euclidean, ManifoldPoint, Sphere, TangentVector
from .meo import MeoConfig, jmeo_cap, meo_run
from .model import QuadraticModel
from .problems import (QuadraticProblem, RayleighProblem, StrictSaddleParams, rayleigh_saddle_params,
                       strongly_convex_quadratic, symmetric_with_spectrum)
from .subproblem import brute_force_oracle, solve_exact
from .tcg import TcgConfig, jcg_cap, tcg_solve

__version__ = "0.1.0"
