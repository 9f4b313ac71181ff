"""Replay a trace against the decrease, radius and local-convergence guarantees.

Each check walks the records it applies to and produces one signed margin
per item: nonnegative means satisfied. The constants that the guarantees
depend on (Lipschitz-type constants of the pullback) are estimated from the
trace itself by ``measure_constants`` or supplied by the caller.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

from .budgets import BudgetReport, theory_budgets
from .driver import UNSUCCESSFUL, IterationRecord, TrConfig, next_radius, outcome_for
from .problems import Objective, StrictSaddleParams
from .trace import Trace, TraceSchemaError, fmt_float

# Steps shorter than this are excluded from the cubic/quadratic remainder estimates:
# there the remainder is below the rounding error of the quantities it is formed from.
MIN_STEP_FOR_REMAINDER = 1e-3
L_H_FLOOR = 1e-12
DECREASE_SLACK = 1e-10
GRAD_SLACK = 1e-12
REL_TOL = 1e-8

MEASURED, DEFAULT, USER = "measured", "default", "user"


@dataclass(frozen=True)
class MeasuredConstants:
    L_H: float
    L_hat_H: float
    kappa_R: float
    nu_R: float = 1.0
    nu_S: float = 1.0
    kappa_S: float = 1.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in ("L_H", "L_hat_H", "kappa_R", "nu_R", "nu_S", "kappa_S"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        if self.kappa_R < 1:
            raise ValueError("kappa_R must be at least 1")

    def as_budget_input(self, f0: float | None) -> dict:
        return dict(L_H=self.L_H, L_hat_H=self.L_hat_H, kappa_R=self.kappa_R, nu_R=self.nu_R,
                    kappa_S=self.kappa_S, f0=f0)


def measure_constants(trace: Trace, objective: Objective | None = None, nu_R: float | None = None,
                      nu_S: float | None = None, kappa_S: float | None = None) -> MeasuredConstants:
    recs = [r for r in trace.records if r.step_norm > 0]
    big = [r for r in recs if r.step_norm >= MIN_STEP_FOR_REMAINDER] or recs
    prov = {}

    def remainder(r):
        return 6.0 * (r.model_decrease - r.actual_decrease) / r.step_norm**3

    vals = [remainder(r) for r in big if math.isfinite(r.actual_decrease)]
    if vals:
        L_H, prov["L_H"] = max(max(vals), L_H_FLOOR), MEASURED
    else:
        L_H, prov["L_H"] = 1.0, DEFAULT
    vals = [2.0 * r.pullback_residual / r.step_norm**2 for r in big if math.isfinite(r.pullback_residual)]
    if vals:
        L_hat, prov["L_hat_H"] = max(max(vals), L_H_FLOOR), MEASURED
    else:
        L_hat, prov["L_hat_H"] = 1.0, DEFAULT
    nuR = 1.0 if nu_R is None else nu_R
    prov["nu_R"] = DEFAULT if nu_R is None else USER
    ratios = []
    for r in recs:
        if r.outcome == UNSUCCESSFUL or r.step_norm > nuR:
            continue
        floor = GRAD_SLACK * max(1.0, abs(r.f)) * 1e3
        if math.isfinite(r.pullback_grad_norm) and r.pullback_grad_norm > floor:
            ratios.append(r.grad_trial_norm / r.pullback_grad_norm)
    if ratios:
        kR, prov["kappa_R"] = max(1.0, max(ratios)), MEASURED
    else:
        kR, prov["kappa_R"] = 1.0, DEFAULT
    prov["nu_S"] = DEFAULT if nu_S is None else USER
    prov["kappa_S"] = DEFAULT if kappa_S is None else USER
    return MeasuredConstants(L_H, L_hat, kR, nuR, 1.0 if nu_S is None else nu_S,
                             1.0 if kappa_S is None else kappa_S, prov)


@dataclass
class CheckResult:
    name: str
    description: str
    checked: int = 0
    violations: int = 0
    worst_margin: float = math.inf
    first_violation: int | None = None
    skipped: str | None = None

    @property
    def passed(self) -> bool:
        return self.violations == 0


@dataclass
class VerificationReport:
    checks: list[CheckResult]
    warnings: list[str]
    budgets: BudgetReport | None = None
    constants: MeasuredConstants | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def by_name(self, name: str) -> CheckResult:
        return next(c for c in self.checks if c.name == name)

    def table(self) -> str:
        rows = [f"{'check':26s} {'checked':>7s} {'viol':>5s} {'worst margin':>13s}  description"]
        for c in self.checks:
            wm = "-" if c.checked == 0 else f"{c.worst_margin:13.4e}"
            tail = f"skipped: {c.skipped}" if c.skipped else c.description
            rows.append(f"{c.name:26s} {c.checked:7d} {c.violations:5d} {wm:>13s}  {tail}")
        rows.append("PASS" if self.passed else "FAIL: " + ", ".join(self.failing()))
        return "\n".join(rows)


# name -> (description, solvers it applies to)
CHECKS: dict[str, tuple[str, tuple[str, ...]]] = {
    "acceptance": ("ratio test matches outcome; accepted steps decrease f", ("exact", "inexact")),
    "radius": ("radius update rule and radius floor", ("exact", "inexact")),
    "cauchy_decrease": ("large-gradient region: Cauchy-type decrease", ("exact",)),
    "eigenstep_decrease": ("negative-curvature region: decrease >= beta*Delta^2/2", ("exact",)),
    "convex_decrease": ("strongly convex region: decrease >= gamma*|s|^2/2", ("exact",)),
    "newton_step_norm": ("strongly convex region: |s| <= |g|/gamma", ("exact",)),
    "local_phase_success": ("small gradient in convex region implies success", ("exact",)),
    "stay_in_basin": ("successful Newton steps stay within delta of the minimizer", ("exact",)),
    "quadratic_tail": ("local phase: all successful, gradient norms square", ("exact", "inexact")),
    "tcg_cauchy_decrease": ("tCG step with |g| >= alpha: Cauchy-type decrease", ("inexact",)),
    "meo_decrease": ("eigen-oracle direction: decrease >= beta*Delta^2/4", ("inexact",)),
    "small_residual_decrease": ("small-residual tCG step: decrease >= gamma*|s|^2/4", ("inexact",)),
    "boundary_decrease": ("boundary tCG step: decrease >= gamma*Delta^2/4", ("inexact",)),
    "iteration_ceilings": ("observed counts within the worst-case bounds", ("exact", "inexact")),
    "termination": ("target claim consistent with final gradient and curvature", ("exact", "inexact")),
}

_TCG_TAKEN = ("tcg_small_residual", "tcg_boundary", "tcg_not_strongly_convex", "tcg_max_iter",
              "meo_certificate_then_tcg")


def _flag(ok: bool) -> float:
    return 0.0 if ok else -1.0


def _close(a: float, b: float, rtol: float = 1e-12) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-300)


def verify_trace(trace: Trace, objective: Objective, params: StrictSaddleParams, config: TrConfig,
                 constants: MeasuredConstants) -> VerificationReport:
    meta = trace.meta
    fp = meta.get("fingerprint")
    if fp != objective.fingerprint():
        raise TraceSchemaError(f"trace was produced for objective {fp!r}, not {objective.fingerprint()!r}")
    solver = meta.get("solver", "exact")
    recs = trace.records
    warnings: list[str] = []
    if not recs:
        warnings.append("trace has no records; every check is vacuous")
    f0 = recs[0].f if recs else None
    budgets = theory_budgets(objective, params, config, constants.as_budget_input(f0), solver=solver,
                             j_cg=meta.get("j_cg"), j_meo=meta.get("j_meo"))
    kH = objective.kappa_H
    a, b, g, d = params.alpha, params.beta, params.gamma, params.delta
    eps_H = meta.get("eps_H", config.eps_hessian(params))
    C = constants

    def slack(r: IterationRecord) -> float:
        return DECREASE_SLACK * max(1.0, abs(r.f))

    def gslack(r: IterationRecord) -> float:
        return GRAD_SLACK * max(1.0, abs(r.f))

    def next_grad(i: int) -> float | None:
        if i + 1 < len(recs):
            return recs[i + 1].grad_norm
        if trace.summary is not None and recs[i].outcome != UNSUCCESSFUL:
            return trace.summary.get("final_grad_norm")
        return None

    items: dict[str, list[tuple[int, float]]] = {name: [] for name in CHECKS}
    skipped: dict[str, str] = {}

    # acceptance
    for i, r in enumerate(recs):
        m = [r.model_decrease, _flag(r.outcome == outcome_for(r.rho, config))]
        if r.outcome != UNSUCCESSFUL:
            m += [r.actual_decrease, r.f - r.f_trial + slack(r)]
        if i + 1 < len(recs):
            nxt = recs[i + 1]
            expect = r.f_trial if r.outcome != UNSUCCESSFUL else r.f
            m += [_flag(nxt.f == expect and nxt.k == r.k + 1)]
        items["acceptance"].append((r.k, min(m)))

    # radius
    floor = budgets.delta_min if solver == "exact" else budgets.delta_min_inexact
    for i, r in enumerate(recs):
        if i == 0:
            rule = _close(r.delta, config.delta0)
        else:
            rule = _close(r.delta, next_radius(recs[i - 1].delta, recs[i - 1].outcome, config))
        m = [_flag(rule), _flag(r.delta <= config.delta_max * (1 + 1e-12))]
        if floor is not None:
            m.append((r.delta - floor) / floor)
        items["radius"].append((r.k, min(m)))

    if solver == "exact":
        for r in recs:
            s = slack(r)
            if r.region == "R1":
                need = 0.5 * min(r.delta, a / kH) * a
                items["cauchy_decrease"].append((r.k, r.model_decrease - need + s))
            elif r.region == "R2":
                items["eigenstep_decrease"].append((r.k, r.model_decrease - 0.5 * b * r.delta**2 + s))
            elif r.region == "R3_candidate":
                items["convex_decrease"].append((r.k, r.model_decrease - 0.5 * g * r.step_norm**2 + s))
                bound = r.grad_norm / g
                items["newton_step_norm"].append((r.k, bound * (1 + REL_TOL) + gslack(r) / g - r.step_norm))
                if r.grad_norm < 3 * (1 - config.eta1) * g**2 / C.L_H:
                    items["local_phase_success"].append((r.k, _flag(r.outcome != UNSUCCESSFUL)))
        if all(math.isnan(r.dist_to_min) for r in recs):
            skipped["stay_in_basin"] = "minimizer unknown for this objective"
        else:
            thr = min(C.nu_S * g, g * d / (2 * C.kappa_S), g * d / 2, 2 * g**2 / (C.kappa_R * C.L_hat_H))
            for i, r in enumerate(recs[:-1]):
                newton = r.multiplier == 0 and r.step_norm <= C.nu_R
                if (r.region == "R3_candidate" and r.dist_to_min <= d and newton and r.outcome != UNSUCCESSFUL
                        and r.grad_norm < thr):
                    items["stay_in_basin"].append((r.k, d - recs[i + 1].dist_to_min))
    else:
        for r in recs:
            s = slack(r)
            from_tcg = r.step_type in _TCG_STEP_SET
            if from_tcg and r.grad_norm >= a and r.tcg_flag != "boundary_step":
                need = 0.5 * min(r.delta, a / kH) * a
                items["tcg_cauchy_decrease"].append((r.k, r.model_decrease - need + s))
            if r.step_type == "meo_direction":
                items["meo_decrease"].append((r.k, r.model_decrease - 0.25 * b * r.delta**2 + s))
            if from_tcg and r.tcg_flag == "small_residual":
                items["small_residual_decrease"].append((r.k, r.model_decrease - 0.25 * g * r.step_norm**2 + s))
            if from_tcg and r.tcg_flag == "boundary_step":
                items["boundary_decrease"].append((r.k, r.model_decrease - 0.25 * g * r.delta**2 + s))

    # quadratic tail
    if solver == "exact":
        cq = budgets.c_Q
        entry_scale = cq * min(g, g * g, g * d)
        rate = C.kappa_R * C.L_hat_H / (2 * g * g)
    else:
        cq = budgets.c_Q_inexact
        entry_scale = cq * min(1.0, g, g * g, g * d)
        rate = C.kappa_R * (C.L_hat_H + 2) / (2 * min(1.0, g * g))
    start = next((i for i, r in enumerate(recs)
                  if r.region == "R3_candidate" and r.grad_norm < min(entry_scale, g * r.delta)), None)
    if start is not None:
        for i in range(start, len(recs)):
            r = recs[i]
            m = [_flag(r.outcome != UNSUCCESSFUL)]
            ng = next_grad(i)
            if ng is not None:
                bound = rate * r.grad_norm**2
                m.append(bound * (1 + REL_TOL) + gslack(r) - ng)
            items["quadratic_tail"].append((r.k, min(m)))

    # ceilings
    if recs:
        summ = trace.summary or {}
        total = summ.get("iterations", len(recs))
        succ = summ.get("successful", sum(r.outcome != UNSUCCESSFUL for r in recs))
        if solver == "exact":
            pairs = [(budgets.successful_bound, succ), (budgets.total_bound, total)]
        else:
            pairs = [(budgets.successful_bound_inexact, succ), (budgets.total_bound_inexact, total),
                     (budgets.hvp_bound, summ.get("total_hvp", sum(r.hvp for r in recs)))]
        for bound, obs in pairs:
            if bound is not None:
                items["iteration_ceilings"].append((-1, bound - obs))

    # termination
    if trace.summary is not None and trace.summary.get("reason") == "target_reached":
        s = trace.summary
        items["termination"].append((-1, config.eps_g - s["final_grad_norm"]))
        items["termination"].append((-1, s["lambda_min_estimate"] + eps_H + 1e-8))

    results = []
    for name, (desc, solvers) in CHECKS.items():
        if solver not in solvers:
            continue
        res = CheckResult(name, desc, skipped=skipped.get(name))
        for k, margin in items[name]:
            res.checked += 1
            res.worst_margin = min(res.worst_margin, margin)
            if not margin >= 0:
                res.violations += 1
                if res.first_violation is None:
                    res.first_violation = k
        results.append(res)
    return VerificationReport(results, warnings, budgets, constants)


_TCG_STEP_SET = frozenset(_TCG_TAKEN)


def verify_with_measured(trace: Trace, objective: Objective, params: StrictSaddleParams,
                         config: TrConfig) -> VerificationReport:
    return verify_trace(trace, objective, params, config, measure_constants(trace, objective))


Verifier = Callable[[Trace], VerificationReport]


REPORT_MAGIC = "# saddletr-verify 1"
REPORT_COLUMNS = ("check", "checked", "violations", "worst_margin", "first_violation", "skipped")


def report_dumps(report: VerificationReport, meta: dict) -> str:
    """Serialize a report in the same layout family as trace files."""
    head = dict(meta, passed=report.passed, warnings=report.warnings,
                constants=None if report.constants is None else asdict(report.constants))
    lines = [REPORT_MAGIC, "#meta " + json.dumps(head, sort_keys=True), "\t".join(REPORT_COLUMNS)]
    for c in report.checks:
        fv = "-" if c.first_violation is None else str(c.first_violation)
        lines.append("\t".join([c.name, str(c.checked), str(c.violations), fmt_float(c.worst_margin), fv,
                                c.skipped or "-"]))
    return "\n".join(lines) + "\n"
