"""Turn an ExperimentConfig into objectives, start points, runs and trace files."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .budgets import BudgetReport, theory_budgets
from .config import ExperimentConfig
from .driver import (TerminationReport, default_meo_config, default_tcg_config, run_exact_rtr,
                     run_inexact_rtr)
from .manifolds import ManifoldPoint
from .meo import jmeo_cap
from .problems import Objective, QuadraticProblem, RayleighProblem, StrictSaddleParams, symmetric_with_spectrum
from .tcg import jcg_cap
from .trace import Trace, trace_from_report, write_trace


def build_objective(cfg: ExperimentConfig) -> Objective:
    p = cfg.problem
    if p.matrix is not None:
        M = np.array(p.matrix, dtype=float)
    elif p.rotation == "identity":
        M = np.diag(p.spectrum)
    else:
        M = symmetric_with_spectrum(p.spectrum, seed=p.seed)
    if p.kind == "rayleigh":
        return RayleighProblem(M)
    if p.b is not None:
        b = np.array(p.b, dtype=float)
    else:
        b = np.random.default_rng([p.seed, 1]).standard_normal(p.dim)
    return QuadraticProblem(M, b, alpha=p.alpha)


def build_params(cfg: ExperimentConfig, objective: Objective) -> StrictSaddleParams:
    base = objective.saddle_params(cfg.problem.c) if isinstance(objective, RayleighProblem) \
        else objective.saddle_params()
    return dataclasses.replace(base, **cfg.param_overrides)


def start_point(cfg: ExperimentConfig, objective: Objective, seed: int) -> ManifoldPoint:
    rng = np.random.default_rng([seed, 0x5eed])
    man = objective.manifold
    st = cfg.start
    near = st.kind == "near_eigenvector" and (st.near_seeds is None or seed in st.near_seeds)
    if near:
        q = objective.eigenvectors[:, st.eigen_index]
        u = man.random_tangent(q, rng)
        u /= np.linalg.norm(u)
        return man.point(man.retr(q, st.perturbation * u))
    if isinstance(objective, QuadraticProblem):
        v = rng.standard_normal(man.ambient_dim)
        return man.point(st.radius * v / np.linalg.norm(v))
    return man.random_point(rng)


def solver_caps(cfg: ExperimentConfig, objective: Objective, params: StrictSaddleParams) -> tuple[int, int]:
    tc = default_tcg_config(objective, params, cfg.tr, cfg.zeta)
    return jcg_cap(tc), jmeo_cap(objective.manifold.intrinsic_dim, cfg.meo_failure_prob, objective.kappa_H,
                                 params.beta)


def trace_meta(cfg: ExperimentConfig, objective: Objective, params: StrictSaddleParams, seed: int) -> dict:
    meta = {
        "name": cfg.name,
        "seed": seed,
        "solver": cfg.solver,
        "fingerprint": objective.fingerprint(),
        "params": dataclasses.asdict(params),
        "tr": dataclasses.asdict(cfg.tr),
        "eps_H": cfg.tr.eps_hessian(params),
        "kappa_H": objective.kappa_H,
        "f_star": objective.lower_bound,
    }
    if cfg.solver == "inexact":
        j_cg, j_meo = solver_caps(cfg, objective, params)
        meta.update(j_cg=j_cg, j_meo=j_meo, zeta=cfg.zeta,
                    meo={"mode": cfg.meo_mode, "failure_prob": cfg.meo_failure_prob, "seed": cfg.meo_seed})
    return meta


def run_seed(cfg: ExperimentConfig, seed: int, objective: Objective | None = None) -> tuple[TerminationReport, Trace]:
    obj = objective if objective is not None else build_objective(cfg)
    params = build_params(cfg, obj)
    x0 = start_point(cfg, obj, seed)
    if cfg.solver == "exact":
        rep = run_exact_rtr(obj, params, cfg.tr, x0)
    else:
        tc = default_tcg_config(obj, params, cfg.tr, cfg.zeta)
        mc = default_meo_config(obj, params, cfg.meo_failure_prob, cfg.meo_mode, cfg.meo_seed)
        rep = run_inexact_rtr(obj, params, cfg.tr, tc, mc, x0)
    return rep, trace_from_report(rep, trace_meta(cfg, obj, params, seed))


def trace_path(cfg: ExperimentConfig, seed: int, out_dir=None) -> Path:
    return Path(out_dir if out_dir is not None else cfg.out_dir) / f"{cfg.name}_seed{seed}.trace"


@dataclass(frozen=True)
class RunSummary:
    seed: int
    reason: str
    converged: bool
    final_f: float
    final_grad_norm: float
    iterations: int
    successful: int
    total_hvp: int
    path: str

    def line(self, name: str) -> str:
        return (f"{name} seed={self.seed} reason={self.reason} f={self.final_f:.12g} "
                f"grad={self.final_grad_norm:.3e} iters={self.iterations} successful={self.successful} "
                f"hvp={self.total_hvp} trace={self.path}")


def _run_and_write(args) -> RunSummary:
    cfg, seed, out_dir = args
    rep, tr = run_seed(cfg, seed)
    path = write_trace(tr, trace_path(cfg, seed, out_dir))
    return RunSummary(seed, rep.reason, rep.converged, rep.final_f, rep.final_grad_norm, rep.iterations,
                      rep.successful, rep.total_hvp, str(path))


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int | None = None) -> list[RunSummary]:
    jobs = [(cfg, s, out_dir) for s in cfg.seeds]
    n = workers if workers is not None else cfg.workers
    if n <= 1 or len(jobs) == 1:
        return [_run_and_write(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_run_and_write, jobs))


def config_budgets(cfg: ExperimentConfig, objective: Objective, params: StrictSaddleParams,
                   measured: dict) -> BudgetReport:
    j_cg = j_meo = None
    if cfg.solver == "inexact":
        j_cg, j_meo = solver_caps(cfg, objective, params)
    return theory_budgets(objective, params, cfg.tr, measured, solver=cfg.solver, j_cg=j_cg, j_meo=j_meo)
