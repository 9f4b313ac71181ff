"""Observed iterations against the worst-case bounds as the spectral gap shrinks.

Runs the exact and inexact solvers on Rayleigh quotients with spectrum
linspace(1, 3, n) for several n, measures the pullback constants from each
trace, and prints observed counts next to the theoretical ceilings.

    python scripts/gap_sweep.py --dims 10 20 50 100 --seeds 5
"""

import argparse

import numpy as np

from saddletr import RayleighProblem, TrConfig, run_exact_rtr, run_inexact_rtr, symmetric_with_spectrum
from saddletr.budgets import theory_budgets
from saddletr.driver import TARGET_REACHED, default_meo_config, default_tcg_config
from saddletr.meo import jmeo_cap
from saddletr.tcg import jcg_cap
from saddletr.trace import trace_from_report
from saddletr.verify import measure_constants, verify_trace


def sweep(dims, seeds, solver):
    print(f"{'n':>5} {'gap':>9} {'solver':>8} {'ok':>5} {'iters':>6} {'bound':>10} {'hvp':>7} {'hvp bound':>10} verify")
    for n in dims:
        P = RayleighProblem(symmetric_with_spectrum(np.linspace(1, 3, n), 0))
        par = P.saddle_params()
        cfg = TrConfig(eps_g=1e-9, eps_H=P.bottom_gap)
        iters, hvps, bounds, hbounds, ok, passed = [], [], [], [], 0, 0
        for s in range(seeds):
            x0 = P.manifold.random_point(np.random.default_rng(s))
            meta = {"fingerprint": P.fingerprint(), "solver": solver}
            if solver == "exact":
                rep = run_exact_rtr(P, par, cfg, x0)
            else:
                tc, mc = default_tcg_config(P, par, cfg), default_meo_config(P, par, seed=s)
                rep = run_inexact_rtr(P, par, cfg, tc, mc, x0)
                meta.update(j_cg=jcg_cap(tc), j_meo=jmeo_cap(mc.dim, mc.failure_prob, mc.kappa_H, mc.beta))
            tr = trace_from_report(rep, meta)
            C = measure_constants(tr, P)
            b = theory_budgets(P, par, cfg, C.as_budget_input(tr.records[0].f if tr.records else None),
                               solver=solver, j_cg=meta.get("j_cg"), j_meo=meta.get("j_meo"))
            ok += rep.reason == TARGET_REACHED
            passed += verify_trace(tr, P, par, cfg, C).passed
            iters.append(rep.iterations)
            hvps.append(rep.total_hvp)
            bounds.append(b.total_bound if solver == "exact" else b.total_bound_inexact)
            hbounds.append(b.hvp_bound if b.hvp_bound is not None else float("nan"))
        print(f"{n:5d} {P.bottom_gap:9.3g} {solver:>8} {ok:>2}/{seeds:<2} {max(iters):6d} {min(bounds):10.3g} "
              f"{max(hvps):7d} {min(hbounds):10.3g} {passed}/{seeds}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[10, 20, 50, 100])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--solver", choices=["exact", "inexact", "both"], default="both")
    args = ap.parse_args()
    for solver in (["exact", "inexact"] if args.solver == "both" else [args.solver]):
        sweep(args.dims, args.seeds, solver)


if __name__ == "__main__":
    main()
