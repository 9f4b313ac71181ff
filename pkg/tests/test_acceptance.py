"""Acceptance criteria 1-9.

Each test records one line, ``criterion N: PASS|FAIL (runtime) detail``. The
lines are printed in the pytest terminal summary, and also when this file is
run directly with ``python tests/test_acceptance.py``.
"""

import contextlib
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from faults import FAULTS, inject  # noqa: E402
from oracles import jmeo_reference  # noqa: E402
from saddletr import (MeoConfig, QuadraticModel, QuadraticProblem, TcgConfig, TrConfig, brute_force_oracle,  # noqa: E402
                      jcg_cap, jmeo_cap, meo_run, run_exact_rtr, solve_exact, tcg_solve)
from saddletr.budgets import local_phase_cap, theory_budgets  # noqa: E402
from saddletr.cli import EXIT_OK, main  # noqa: E402
from saddletr.config import load_config  # noqa: E402
from saddletr.driver import TARGET_REACHED, UNSUCCESSFUL  # noqa: E402
from saddletr.experiment import build_objective, build_params, config_budgets, run_seed  # noqa: E402
from saddletr.problems import random_orthogonal  # noqa: E402
from saddletr.tcg import SMALL_RESIDUAL  # noqa: E402
from saddletr.trace import write_trace  # noqa: E402
from saddletr.verify import measure_constants, verify_trace  # noqa: E402

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
RESULTS: dict[int, str] = {}


@contextlib.contextmanager
def criterion(n, limit=None, setup=0.0):
    """Time the block and record its verdict; `detail` is filled in by the block.

    ``setup`` adds time already spent in fixtures (the shared solver runs).
    """
    info = {"detail": ""}
    t0 = time.perf_counter()
    ok = False
    try:
        yield info
        ok = True
    finally:
        dt = time.perf_counter() - t0 + setup
        over = limit is not None and dt > limit
        verdict = "PASS" if ok and not over else "FAIL"
        note = info["detail"] + (f"; runtime over the {limit:g} s limit" if over else "")
        RESULTS[n] = f"criterion {n}: {verdict} ({dt:.2f} s) {note}".rstrip()
    assert not over, RESULTS[n]


@pytest.fixture(scope="module")
def exact_runs():
    cfg = load_config(CONFIGS / "rayleigh_s49.cfg")
    t0 = time.perf_counter()
    runs = [run_seed(cfg, s) for s in cfg.seeds]
    return cfg, runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def inexact_runs():
    cfg = load_config(CONFIGS / "rayleigh_s99_inexact.cfg")
    t0 = time.perf_counter()
    runs = [run_seed(cfg, s) for s in cfg.seeds]
    return cfg, runs, time.perf_counter() - t0


def trs_instance(rng, n, hard):
    eig = rng.uniform(-3, 3, n)
    U = random_orthogonal(n, rng)
    H = 0.5 * ((U * eig) @ U.T + ((U * eig) @ U.T).T)
    g = rng.standard_normal(n) * 10 ** rng.uniform(-2, 1)
    if not hard:
        return H, g, 10 ** rng.uniform(-2, 1)
    # gradient orthogonal to the bottom eigenvector and a radius beyond the
    # shifted-Newton step: the minimizer needs an eigenvector component
    w, V = np.linalg.eigh(H)
    g -= (g @ V[:, 0]) * V[:, 0]
    c = V.T @ g
    p = -c[1:] / (w[1:] - w[0])
    return H, g, float(np.linalg.norm(p)) * rng.uniform(1.2, 3.0)


def test_criterion_1_exact_subproblem_matches_oracle():
    with criterion(1, limit=5) as info:
        rng = np.random.default_rng(20240601)
        worst, hard_count, mismatches = 0.0, 0, 0
        for i in range(200):
            n = int(rng.integers(2, 9))
            hard = i % 5 == 0
            H, g, radius = trs_instance(rng, n, hard)
            m = QuadraticModel.from_matrix(H, g)
            sol = solve_exact(m, radius)
            err = abs(m.value(sol.step.components) - brute_force_oracle(m, radius))
            worst = max(worst, err)
            mismatches += err > 1e-8
            hard_count += hard and np.linalg.eigvalsh(H)[0] < 0
        info["detail"] = f"200 instances, {hard_count} hard-case, max |model - oracle| = {worst:.1e}"
        assert hard_count >= 20 and mismatches == 0, info["detail"]


def test_criterion_2_rayleigh_global_convergence(exact_runs):
    cfg, runs, elapsed = exact_runs
    with criterion(2, limit=10, setup=elapsed) as info:
        obj = build_objective(cfg)
        lam = np.linalg.eigvalsh(np.asarray(obj.A))[0]
        reached = sum(rep.reason == TARGET_REACHED for rep, _ in runs)
        err = max(abs(rep.final_f - lam) for rep, _ in runs)
        info["detail"] = (f"{reached}/{len(runs)} target_reached, max |f - lambda_min| = {err:.1e}")
        assert reached == len(runs) and err <= 1e-8, info["detail"]


def test_criterion_3_quadratic_tail(exact_runs):
    cfg, runs, _ = exact_runs
    with criterion(3) as info:
        obj = build_objective(cfg)
        gamma = build_params(cfg, obj).gamma
        max_succ, worst_ratio, bad = 0, 0.0, []
        for rep, tr in runs:
            C = measure_constants(tr, obj)
            slope = 10 * C.kappa_R * C.L_hat_H / (2 * gamma**2)
            grads = [r.grad_norm for r in tr.records] + [rep.final_grad_norm]
            start = next(i for i, gn in enumerate(grads) if gn < 1e-3)
            end = next(i for i, gn in enumerate(grads) if gn <= cfg.tr.eps_g)
            succ = sum(r.outcome != UNSUCCESSFUL for r in tr.records[start:end])
            max_succ = max(max_succ, succ)
            for k in range(start, len(grads) - 1):
                ratio = grads[k + 1] / (slope * grads[k] ** 2)
                worst_ratio = max(worst_ratio, ratio)
            if succ > 5 or worst_ratio > 1:
                bad.append(tr.meta["seed"])
        info["detail"] = (f"max successful tail iterations = {max_succ} (limit 5), "
                          f"max |g+|/(C |g|^2) = {worst_ratio:.2e}")
        assert not bad, f"{info['detail']}; failing seeds {bad}"


def test_criterion_4_lemma_replay(exact_runs, inexact_runs, tmp_path):
    with criterion(4) as info:
        counts = {}
        for (cfg, runs, _), name in ((exact_runs, "exact"), (inexact_runs, "inexact")):
            paths = [str(write_trace(tr, tmp_path / name / f"seed{tr.meta['seed']}.trace")) for _, tr in runs]
            code = main(["verify", str(CONFIGS / (cfg.source and Path(cfg.source).name)), *paths, "--no-report"])
            obj = build_objective(cfg)
            params = build_params(cfg, obj)
            viol = 0
            for _, tr in runs:
                rep = verify_trace(tr, obj, params, cfg.tr, measure_constants(tr, obj))
                viol += sum(c.violations for c in rep.checks)
                for c in rep.checks:
                    counts[c.name] = counts.get(c.name, 0) + c.checked
            assert code == EXIT_OK and viol == 0, f"{name}: exit {code}, {viol} violations"
        isolated = []
        for fault in FAULTS:
            clean, bad, check = inject(fault)
            isolated.append(clean.passed and bad.failing() == [check])
        info["detail"] = (f"40 traces, 0 violations over {sum(counts.values())} checked items; "
                          f"{sum(isolated)}/{len(FAULTS)} faults trip exactly their check")
        assert all(isolated), info["detail"]


def test_criterion_5_tcg_cap():
    with criterion(5, limit=5) as info:
        n, fired, worst = 200, 0, 0
        cfg = TcgConfig(zeta=0.5, gamma=1.0, kappa_H=100.0, eps_g=1e-6, dim=n)
        cap = jcg_cap(cfg)
        for seed in range(100):
            rng = np.random.default_rng(seed)
            eig = np.concatenate([[1.0, 100.0], rng.uniform(1.0, 100.0, n - 2)])
            U = random_orthogonal(n, rng)
            H = 0.5 * ((U * eig) @ U.T + ((U * eig) @ U.T).T)
            out = tcg_solve(QuadraticModel.from_matrix(H, rng.standard_normal(n)), 1e8, cfg)
            ok = out.flag == SMALL_RESIDUAL and out.iterations <= cap
            fired += ok
            worst = max(worst, out.iterations)
        info["detail"] = f"{fired}/100 small-residual exits within cap {cap} (max iterations {worst})"
        assert fired == 100, info["detail"]


def test_criterion_6_inexact_end_to_end(inexact_runs):
    cfg, runs, elapsed = inexact_runs
    with criterion(6, limit=30, setup=elapsed) as info:
        obj = build_objective(cfg)
        params = build_params(cfg, obj)
        reached = sum(rep.reason == TARGET_REACHED for rep, _ in runs)
        over, worst = [], 0.0
        for rep, tr in runs:
            measured = measure_constants(tr, obj).as_budget_input(tr.records[0].f)
            bound = config_budgets(cfg, obj, params, measured).hvp_bound
            worst = max(worst, rep.total_hvp / bound)
            if rep.total_hvp > bound:
                over.append(tr.meta["seed"])
        near = [tr for _, tr in runs if tr.meta["seed"] in cfg.start.near_seeds]
        escapes = sum(any(r.step_type == "meo_direction" or r.tcg_flag == "not_strongly_convex"
                          for r in tr.records) for tr in near)
        info["detail"] = (f"{reached}/{len(runs)} target_reached, max hvp/bound = {worst:.1e}, "
                          f"{escapes}/{len(near)} saddle starts show negative curvature")
        assert reached >= 19 and not over and escapes == len(near) == 5, info["detail"]


def test_criterion_7_meo_completeness():
    with criterion(7, limit=20) as info:
        n, beta, kappa, p = 50, 1.0, 100.0, 0.01
        cap = jmeo_cap(n, p, kappa, beta)
        fired, contract_failures = 0, 0
        for seed in range(1000):
            rng = np.random.default_rng(seed)
            eig = np.concatenate([[-1.0, 0.99 * kappa], rng.uniform(-1.0, 0.99 * kappa, n - 2)])
            U = random_orthogonal(n, rng)
            H = 0.5 * ((U * eig) @ U.T + ((U * eig) @ U.T).T)
            m = QuadraticModel.from_matrix(H, rng.standard_normal(n))
            radius = 1.0
            out = meo_run(m, radius, MeoConfig(beta=beta, failure_prob=p, kappa_H=kappa, dim=n, seed=seed))
            if out.certificate or out.hvp_count > cap:
                continue
            fired += 1
            s = out.direction.components
            ok = (m.g @ s <= 0 and s @ (H @ s) <= -0.5 * beta * (s @ s)
                  and math.isclose(np.linalg.norm(s), radius, rel_tol=1e-12))
            contract_failures += not ok
        info["detail"] = (f"direction within J_MEO = {cap} in {fired}/1000 trials, "
                          f"{contract_failures} contract violations")
        assert fired >= 990 and contract_failures == 0, info["detail"]


class _Logging(QuadraticProblem):
    def __init__(self, *a, **k):
        self.calls = []
        super().__init__(*a, **k)
        self.calls.clear()

    def f(self, x):
        self.calls.append(np.array(x, copy=True))
        return super().f(x)


def test_criterion_8_strongly_convex_newton():
    with criterion(8) as info:
        Q = np.diag(np.arange(1.0, 11.0))
        max_it, worst, bad = 0, 0.0, []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            obj = _Logging(Q, rng.standard_normal(10))
            v = rng.standard_normal(10)
            x0 = obj.manifold.point(rng.uniform(0.5, 10.0) * v / np.linalg.norm(v))
            rep = run_exact_rtr(obj, obj.saddle_params(), TrConfig(eps_g=1e-9), x0)
            max_it = max(max_it, rep.iterations)
            x, interior = obj.calls[0], False
            for rec, y in zip(rep.trace, obj.calls[1:]):
                interior = interior or rec.step_norm < rec.delta * (1 - 1e-9)
                if interior:
                    newton = -np.linalg.solve(Q, Q @ x - obj.b)
                    err = np.linalg.norm((y - x) - newton)
                    worst = max(worst, err / max(1.0, np.linalg.norm(newton)))
                    if rec.multiplier != 0 or err > 1e-10 * max(1.0, np.linalg.norm(newton)):
                        bad.append(seed)
                if rec.outcome != UNSUCCESSFUL:
                    x = y
            if rep.reason != TARGET_REACHED or rep.iterations > 12:
                bad.append(seed)
        info["detail"] = f"20 starts, max iterations {max_it} (limit 12), max Newton mismatch {worst:.1e}"
        assert not bad, f"{info['detail']}; failing seeds {sorted(set(bad))}"


def test_criterion_9_budget_calculators():
    with criterion(9) as info:
        from saddletr import RayleighProblem, StrictSaddleParams
        cap = local_phase_cap(1.0, 1.0, 2.0, 1e-9)
        P = RayleighProblem(np.diag([3.0, 2.0, 1.0]))
        rep = theory_budgets(P, StrictSaddleParams(1.0, 1.0, 1.0, 1.0), TrConfig(eps_g=1e-9),
                             dict(L_H=1.0, L_hat_H=2.0, kappa_R=1.0, nu_R=1.0, kappa_S=1.0, f0=3.0))
        jm = jmeo_cap(100, 0.01, 100.0, 1.0)
        info["detail"] = (f"local-phase cap {cap} (report {rep.local_phase_iterations}), J_MEO {jm} "
                          f"(independent formula {jmeo_reference(100, 0.01, 100.0, 1.0)})")
        assert cap == 5 and rep.local_phase_iterations == 5 and jm == 76, info["detail"]


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
