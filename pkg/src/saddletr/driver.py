"""Outer trust-region loops: exact subproblem solves, and tCG plus eigenvalue oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .manifolds import Array, ManifoldPoint, TangentVector
from .meo import MeoConfig, jmeo_cap, meo_run
from .model import QuadraticModel
from .problems import Objective, StrictSaddleParams
from .subproblem import solve_exact
from .tcg import (BOUNDARY_STEP, MAX_ITER, NOT_STRONGLY_CONVEX, SMALL_RESIDUAL, TcgConfig,
                  jcg_cap, tcg_solve)

VERY_SUCCESSFUL = "very_successful"
SUCCESSFUL = "successful"
UNSUCCESSFUL = "unsuccessful"

TARGET_REACHED = "target_reached"
MEO_CERTIFICATE_AT_ZERO = "meo_certificate_at_zero_gradient"
MAX_ITERATIONS = "max_iterations"
BUDGET_EXHAUSTED = "budget_exhausted"
CONVERGED_REASONS = (TARGET_REACHED, MEO_CERTIFICATE_AT_ZERO)

STEP_TYPES = ("exact", "tcg_small_residual", "tcg_boundary", "tcg_not_strongly_convex",
              "tcg_max_iter", "meo_direction", "meo_certificate_then_tcg")
_TCG_STEP = {SMALL_RESIDUAL: "tcg_small_residual", BOUNDARY_STEP: "tcg_boundary",
             NOT_STRONGLY_CONVEX: "tcg_not_strongly_convex", MAX_ITER: "tcg_max_iter"}

ZERO_GRAD_FACTOR = 1e-15
DENSE_CHECK_MAX_DIM = 200


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class TrConfig:
    delta0: float = 1.0
    delta_max: float = 100.0
    eta1: float = 0.1
    eta2: float = 0.75
    tau1: float = 0.25
    tau2: float = 2.0
    eps_g: float = 1e-6
    eps_H: float | None = None  # None means: use beta
    max_outer_iterations: int = 10000
    hvp_budget: int | None = None

    def __post_init__(self):
        if not (0 < self.delta0 < self.delta_max):
            raise ValueError("need 0 < delta0 < delta_max")
        if not (0 < self.eta1 < self.eta2 < 1):
            raise ValueError("need 0 < eta1 < eta2 < 1")
        if not (0 < self.tau1 < 1 < self.tau2):
            raise ValueError("need 0 < tau1 < 1 < tau2")
        if not self.eps_g > 0:
            raise ValueError("eps_g must be positive")
        if self.eps_H is not None and not self.eps_H > 0:
            raise ValueError("eps_H must be positive")
        if self.max_outer_iterations < 0:
            raise ValueError("max_outer_iterations must be nonnegative")

    def eps_hessian(self, params: StrictSaddleParams) -> float:
        return params.beta if self.eps_H is None else self.eps_H


@dataclass(frozen=True)
class TrustRegionState:
    x: ManifoldPoint
    f: float
    delta: float
    k: int = 0
    hvp_ledger: int = 0
    success_count: int = 0
    very_success_count: int = 0
    failure_count: int = 0


@dataclass(frozen=True)
class IterationRecord:
    k: int
    region: str
    step_type: str
    tcg_flag: str
    outcome: str
    f: float
    grad_norm: float
    delta: float
    rho: float
    step_norm: float
    model_decrease: float
    actual_decrease: float
    f_trial: float
    hvp: int
    multiplier: float = math.nan
    lambda_min: float = math.nan
    grad_trial_norm: float = math.nan
    pullback_grad_norm: float = math.nan
    pullback_residual: float = math.nan
    dist_to_min: float = math.nan
    cauchy_fallback: int = 0

    @property
    def accepted(self) -> bool:
        return self.outcome != UNSUCCESSFUL


RECORD_COLUMNS = tuple(f.name for f in fields(IterationRecord))


@dataclass
class TerminationReport:
    reason: str
    final_point: ManifoldPoint
    final_f: float
    final_grad_norm: float
    min_hessian_eigenvalue_estimate: float
    total_hvp: int
    check_hvp: int
    iterations: int
    successful: int
    trace: list[IterationRecord] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.reason in CONVERGED_REASONS


def classify_by_values(grad_norm: float, lambda_min: float, params: StrictSaddleParams) -> str:
    if grad_norm >= params.alpha:
        return "R1"
    if math.isnan(lambda_min):
        return "unknown"
    if lambda_min <= -params.beta:
        return "R2"
    if lambda_min >= params.gamma:
        return "R3_candidate"
    return "unknown"


def classify_region(objective: Objective, x: ManifoldPoint, params: StrictSaddleParams) -> str:
    gn = float(np.linalg.norm(objective.grad(x.coords)))
    if gn >= params.alpha:
        return "R1"
    return classify_by_values(gn, objective.hessian_min_eig(x.coords), params)


def outcome_for(rho: float, cfg: TrConfig) -> str:
    if rho > cfg.eta2:
        return VERY_SUCCESSFUL
    if rho >= cfg.eta1:
        return SUCCESSFUL
    return UNSUCCESSFUL


def next_radius(delta: float, outcome: str, cfg: TrConfig) -> float:
    if outcome == VERY_SUCCESSFUL:
        return min(cfg.tau2 * delta, cfg.delta_max)
    if outcome == SUCCESSFUL:
        return delta
    return cfg.tau1 * delta


def acceptance_and_radius_update(state: TrustRegionState, candidate: ManifoldPoint, model_decrease: float,
                                 f_new: float, cfg: TrConfig, actual_decrease: float | None = None,
                                 hvp: int = 0) -> tuple[TrustRegionState, float, str]:
    """Ratio test and radius update. Returns (new state, rho, outcome)."""
    if not model_decrease > 0:
        raise InvariantViolation(f"model decrease must be positive, got {model_decrease!r}")
    ared = state.f - f_new if actual_decrease is None else actual_decrease
    rho = ared / model_decrease
    outcome = outcome_for(rho, cfg)
    delta = next_radius(state.delta, outcome, cfg)
    common = dict(delta=delta, k=state.k + 1, hvp_ledger=state.hvp_ledger + hvp)
    if outcome == UNSUCCESSFUL:
        new = replace(state, failure_count=state.failure_count + 1, **common)
    elif outcome == VERY_SUCCESSFUL:
        new = replace(state, x=candidate, f=f_new, very_success_count=state.very_success_count + 1, **common)
    else:
        new = replace(state, x=candidate, f=f_new, success_count=state.success_count + 1, **common)
    return new, rho, outcome


def min_eig_estimate(objective: Objective, x: Array, seed: int = 0) -> tuple[float, int]:
    """Smallest Hessian eigenvalue: dense up to 200 dimensions, ARPACK Lanczos beyond."""
    man = objective.manifold
    d = man.intrinsic_dim
    if d <= DENSE_CHECK_MAX_DIM:
        return objective.hessian_min_eig(x), d
    count = [0]

    def mv(v):
        count[0] += 1
        v = np.asarray(v).reshape(-1)
        return objective.hvp(x, man.proj(x, v)) if man.name != "sphere" else \
            objective.hvp(x, man.proj(x, v)) + float(x @ v) * objective.kappa_H * x
    # on the sphere the normal direction is shifted to the top of the spectrum so it cannot be the minimum
    op = spla.LinearOperator((man.ambient_dim, man.ambient_dim), matvec=mv, dtype=float)
    rng = np.random.default_rng(seed)
    w = spla.eigsh(op, k=1, which="SA", v0=rng.standard_normal(man.ambient_dim), tol=1e-10,
                   return_eigenvectors=False)
    return float(w[0]), count[0]


@dataclass
class _Proposal:
    step: Array
    hess_step: Array
    model_decrease: float
    step_type: str
    hvp: int
    tcg_flag: str = "-"
    multiplier: float = math.nan
    lambda_min: float = math.nan
    cauchy_fallback: int = 0
    terminate: str | None = None


def _run(objective: Objective, params: StrictSaddleParams, cfg: TrConfig, x0: ManifoldPoint,
         propose: Callable[[QuadraticModel, TrustRegionState, float], _Proposal],
         telemetry: bool = True) -> TerminationReport:
    man = objective.manifold
    if x0.manifold_id != man.manifold_id:
        raise ValueError("starting point is on a different manifold")
    if cfg.delta0 > man.retraction_domain_radius:
        raise ValueError("initial radius exceeds the retraction domain")
    eps_H = cfg.eps_hessian(params)
    zero_tol = ZERO_GRAD_FACTOR * objective.kappa_H
    state = TrustRegionState(x=x0, f=objective.f(x0.coords), delta=cfg.delta0)
    g = objective.grad(x0.coords)
    trace: list[IterationRecord] = []
    check_hvp = 0
    lam_est = math.nan

    def report(reason):
        return TerminationReport(reason, state.x, state.f, float(np.linalg.norm(g)), lam_est,
                                 state.hvp_ledger, check_hvp, state.k,
                                 state.success_count + state.very_success_count, trace)

    while True:
        x = state.x.coords
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.eps_g:
            lam_est, used = min_eig_estimate(objective, x, seed=state.k)
            check_hvp += used
            if lam_est >= -eps_H:
                return report(TARGET_REACHED)
        if state.k >= cfg.max_outer_iterations:
            return report(MAX_ITERATIONS)
        if cfg.hvp_budget is not None and state.hvp_ledger >= cfg.hvp_budget:
            return report(BUDGET_EXHAUSTED)

        model = QuadraticModel(state.f, g, lambda v, _x=x: objective.hvp(_x, v), state.x, man)
        prop = propose(model, state, 0.0 if gnorm <= zero_tol else gnorm)
        if prop.terminate is not None:
            state = replace(state, hvp_ledger=state.hvp_ledger + prop.hvp)
            lam_est = prop.lambda_min
            return report(prop.terminate)

        s = prop.step
        y = man.retr(x, s)
        d = man.displacement(x, s)
        ared = objective.decrease(x, d)
        f_trial = objective.f(y)
        g_trial = objective.grad(y)
        lam = prop.lambda_min
        if telemetry and math.isnan(lam) and gnorm < params.alpha:
            lam = objective.hessian_min_eig(x)
        region = classify_by_values(gnorm, lam, params)
        if telemetry:
            pb = man.pullback_gradient(x, s, g_trial)
            tele = dict(grad_trial_norm=float(np.linalg.norm(g_trial)), pullback_grad_norm=float(np.linalg.norm(pb)),
                        pullback_residual=float(np.linalg.norm(pb - g - prop.hess_step)),
                        dist_to_min=objective.dist_to_minimizer(x))
        else:
            tele = {}
        delta_k = state.delta
        f_k = state.f
        cand = ManifoldPoint(y, man.manifold_id)
        y.setflags(write=False)
        state, rho, outcome = acceptance_and_radius_update(state, cand, prop.model_decrease, f_trial, cfg,
                                                           actual_decrease=ared, hvp=prop.hvp)
        trace.append(IterationRecord(
            k=state.k - 1, region=region, step_type=prop.step_type, tcg_flag=prop.tcg_flag, outcome=outcome,
            f=f_k, grad_norm=gnorm, delta=delta_k, rho=rho, step_norm=float(np.linalg.norm(s)),
            model_decrease=prop.model_decrease, actual_decrease=ared, f_trial=f_trial, hvp=prop.hvp,
            multiplier=prop.multiplier, lambda_min=lam, cauchy_fallback=prop.cauchy_fallback, **tele))
        if outcome != UNSUCCESSFUL:
            g = g_trial


def run_exact_rtr(objective: Objective, params: StrictSaddleParams, config: TrConfig, x0: ManifoldPoint,
                  telemetry: bool = True) -> TerminationReport:
    def propose(model, state, gnorm):
        sol = solve_exact(model, state.delta)
        return _Proposal(sol.step.components, sol.hess_step, sol.model_decrease, "exact", sol.hvp_count,
                         multiplier=sol.multiplier, lambda_min=sol.min_eig)

    return _run(objective, params, config, x0, propose, telemetry)


def default_tcg_config(objective: Objective, params: StrictSaddleParams, cfg: TrConfig, zeta: float = 0.5) -> TcgConfig:
    return TcgConfig(zeta=zeta, gamma=params.gamma, kappa_H=objective.kappa_H, eps_g=cfg.eps_g,
                     dim=objective.manifold.intrinsic_dim)


def default_meo_config(objective: Objective, params: StrictSaddleParams, failure_prob: float = 0.01,
                       mode: str = "lanczos", seed: int = 0) -> MeoConfig:
    return MeoConfig(beta=params.beta, failure_prob=failure_prob, kappa_H=objective.kappa_H,
                     dim=objective.manifold.intrinsic_dim, mode=mode, seed=seed)


def run_inexact_rtr(objective: Objective, params: StrictSaddleParams, config: TrConfig, tcg_config: TcgConfig,
                    meo_config: MeoConfig, x0: ManifoldPoint, telemetry: bool = True) -> TerminationReport:
    cap = jcg_cap(tcg_config)  # fixed for the whole run

    def call_meo(model, state):
        seed = int(np.random.SeedSequence([meo_config.seed, state.k]).generate_state(1)[0])
        return meo_run(model, state.delta, replace(meo_config, seed=seed))

    def tcg_step(t, step_type, hvp):
        if t.flag == NOT_STRONGLY_CONVEX and t.model_decrease < t.cauchy_decrease:
            return _Proposal(t.cauchy_step, t.cauchy_hess_step, t.cauchy_decrease, step_type, hvp,
                             tcg_flag=t.flag, cauchy_fallback=1)
        return _Proposal(t.step.components, t.hess_step, t.model_decrease, step_type, hvp, tcg_flag=t.flag)

    def propose(model, state, gnorm):
        t = None
        if gnorm > 0:
            t = tcg_solve(model, state.delta, tcg_config, cap=cap)
            if gnorm >= params.alpha or t.flag == BOUNDARY_STEP:
                return tcg_step(t, _TCG_STEP[t.flag], t.hvp_count)
        m = call_meo(model, state)
        hvp = m.hvp_count + (t.hvp_count if t is not None else 0)
        if m.certificate:
            if t is None:
                return _Proposal(np.zeros_like(model.g), np.zeros_like(model.g), 0.0, "meo_certificate_then_tcg",
                                 hvp, lambda_min=m.curvature, terminate=MEO_CERTIFICATE_AT_ZERO)
            return tcg_step(t, "meo_certificate_then_tcg", hvp)
        s = m.direction.components
        dec = -float(model.g @ s) - 0.5 * float(s @ m.hess_step)
        return _Proposal(s, m.hess_step, dec, "meo_direction", hvp, tcg_flag=t.flag if t is not None else "-")

    return _run(objective, params, config, x0, propose, telemetry)

