"""saddletr command line: run, verify, budgets.

Exit codes: 0 success, 1 a run did not converge / a check failed / a bound
was exceeded, 2 usage, configuration or file errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .driver import TrConfig
from .experiment import build_objective, build_params, config_budgets, run_experiment
from .problems import ProblemError, StrictSaddleParams
from .trace import TraceSchemaError, read_trace
from .verify import measure_constants, report_dumps, verify_trace

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _err(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_ERROR


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    if args.eps_g is not None:
        cfg = dataclasses.replace(cfg, tr=dataclasses.replace(cfg.tr, eps_g=args.eps_g))
    summaries = run_experiment(cfg, out_dir=args.out, workers=args.workers)
    for s in summaries:
        print(s.line(cfg.name))
    ok = all(s.converged for s in summaries)
    print(f"{sum(s.converged for s in summaries)}/{len(summaries)} runs converged")
    return EXIT_OK if ok else EXIT_FAIL


def _run_settings(cfg: ExperimentConfig, trace) -> tuple[StrictSaddleParams, TrConfig, list[str]]:
    """Parameters the trace was produced with; notes any difference from the config file."""
    obj = build_objective(cfg)
    params = build_params(cfg, obj)
    notes = []
    meta = trace.meta
    if "params" in meta:
        p2 = StrictSaddleParams(**meta["params"])
        if p2 != params:
            notes.append("strict-saddle parameters differ from the config; using the trace's values")
        params = p2
    tr = cfg.tr
    if "tr" in meta:
        tr2 = TrConfig(**meta["tr"])
        if tr2 != tr:
            notes.append("trust-region settings differ from the config (command-line override?); "
                         "using the trace's values")
        tr = tr2
    if meta.get("solver", cfg.solver) != cfg.solver:
        notes.append(f"trace solver {meta.get('solver')!r} differs from config solver {cfg.solver!r}")
    return params, tr, notes


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    obj = build_objective(cfg)
    status = EXIT_OK
    for tpath in args.traces:
        if not Path(tpath).is_file():
            return _err(f"trace not found: {tpath}")
        trace = read_trace(tpath)
        params, tr, notes = _run_settings(cfg, trace)
        constants = measure_constants(trace, obj)
        rep = verify_trace(trace, obj, params, tr, constants)
        print(f"== {tpath}")
        for n in notes + rep.warnings:
            print(f"warning: {n}")
        prov = ", ".join(f"{k}={getattr(constants, k):.4g} ({constants.provenance.get(k, '?')})"
                         for k in ("L_H", "L_hat_H", "kappa_R", "nu_R", "nu_S", "kappa_S"))
        print(f"constants: {prov}")
        print(rep.table())
        if not args.no_report:
            Path(str(tpath) + ".verify").write_text(report_dumps(rep, {"trace": Path(tpath).name}))
        if not rep.passed:
            status = EXIT_FAIL
    return status


_BOUND_ROWS = {
    "exact": (("successful iterations", "successful", "successful_bound"),
              ("total iterations", "iterations", "total_bound")),
    "inexact": (("successful iterations", "successful", "successful_bound_inexact"),
                ("total iterations", "iterations", "total_bound_inexact"),
                ("Hessian-vector products", "total_hvp", "hvp_bound")),
}


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def cmd_budgets(args) -> int:
    cfg = load_config(args.config)
    obj = build_objective(cfg)
    params = build_params(cfg, obj)
    tr = cfg.tr
    trace = None
    measured: dict = {}
    if args.trace is not None:
        if not Path(args.trace).is_file():
            return _err(f"trace not found: {args.trace}")
        trace = read_trace(args.trace)
        if trace.meta.get("fingerprint") != obj.fingerprint():
            return _err("trace was produced for a different objective than the config describes")
        params, tr, notes = _run_settings(cfg, trace)
        for n in notes:
            print(f"warning: {n}")
        c = measure_constants(trace, obj)
        measured = c.as_budget_input(trace.records[0].f if trace.records else None)
    measured.update(cfg.constants)
    rep = config_budgets(dataclasses.replace(cfg, tr=tr), obj, params, measured)
    print(f"budgets for {cfg.name} ({cfg.solver} solver)")
    print(f"  parameters: alpha={params.alpha:.6g} beta={params.beta:.6g} gamma={params.gamma:.6g} "
          f"delta={params.delta:.6g} kappa_H={obj.kappa_H:.6g}")
    if measured:
        print("  constants: " + ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(measured.items())))
    for k, v in rep.as_dict().items():
        if k in ("gaps", "solver"):
            continue
        print(f"  {k:26s} {_fmt(v)}")
    if rep.gaps:
        print("  missing constants: " + ", ".join(rep.gaps) + " (supply a trace or a [constants] section)")
    if trace is None:
        return EXIT_OK
    summ = trace.summary or {}
    exceeded = False
    print(f"observed vs bound ({args.trace}):")
    for label, obs_key, bound_key in _BOUND_ROWS[cfg.solver]:
        obs = summ.get(obs_key)
        bound = getattr(rep, bound_key)
        flag = ""
        if obs is not None and bound is not None and math.isfinite(bound) and obs > bound:
            flag, exceeded = "  EXCEEDED", True
        print(f"  {label:26s} observed={_fmt(obs):>10s}  bound={_fmt(bound)}{flag}")
    return EXIT_FAIL if exceeded else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="saddletr", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the configured experiment(s) and write traces")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="run only this seed")
    r.add_argument("--eps-g", type=float, dest="eps_g", help="override the gradient tolerance")
    r.add_argument("--out", help="output directory (default: config out_dir, then $SADDLETR_OUT_DIR)")
    r.add_argument("--workers", type=int, help="process pool size for sweeps")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("verify", help="replay traces against the decrease and radius guarantees")
    v.add_argument("config")
    v.add_argument("traces", nargs="+")
    v.add_argument("--no-report", action="store_true", help="do not write <trace>.verify files")
    v.set_defaults(func=cmd_verify)
    b = sub.add_parser("budgets", help="print worst-case budgets, optionally against a trace")
    b.add_argument("config")
    b.add_argument("trace", nargs="?")
    b.set_defaults(func=cmd_budgets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        return _err(str(e))
    except TraceSchemaError as e:
        return _err(f"trace schema: {e}")
    except (ProblemError, ValueError, OSError) as e:
        return _err(str(e))


if __name__ == "__main__":
    sys.exit(main())
