"""Worst-case iteration and Hessian-vector-product budgets from measured constants.

All bounds follow the underlined convention ``low(t) = min(1, t)`` for the
strict-saddle parameters. Missing constants produce ``None`` entries and
are listed in ``BudgetReport.gaps``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

from .problems import StrictSaddleParams


def _low(t: float) -> float:
    return min(1.0, t)


def loglog_term(numerator: float, denominator: float) -> float:
    """log2 log2(numerator/denominator), clamped at 0 where the argument is at most 2."""
    arg = numerator / denominator
    if arg <= 2.0:
        return 0.0
    return max(0.0, math.log2(math.log2(arg)))


def local_phase_cap(gamma: float, kappa_R: float, L_hat_H: float, eps_g: float) -> int:
    """Iterations after entering the quadratic regime, ceil(log2 log2(2 gamma^2 / (kappa_R L_hat eps_g)))."""
    return math.ceil(loglog_term(2.0 * gamma**2, kappa_R * L_hat_H * eps_g))


def radius_constant_exact(L_H, kappa_H, eta1, tau1) -> float:
    a = 3.0 * (1.0 - eta1)
    return min(1.0, tau1 * math.sqrt(a / L_H), tau1 * (a / (kappa_H * L_H)) ** (1 / 3), tau1 * a / L_H)


def radius_constant_inexact(L_H, kappa_H, eta1, tau1) -> float:
    a = 3.0 * (1.0 - eta1)
    return min(1.0, tau1 * a / (2 * L_H), tau1 * math.sqrt(a / (2 * L_H)),
               tau1 * (a / (2 * kappa_H * L_H)) ** (1 / 3))


def radius_floor(c_delta: float, delta0: float, p: StrictSaddleParams) -> float:
    return c_delta * min(delta0, math.sqrt(p.alpha), p.alpha ** (2 / 3), p.beta, p.gamma)


def local_constant_exact(L_H, L_hat_H, kappa_R, nu_R, kappa_S, eta1) -> float:
    return min(3 * (1 - eta1) / L_H, nu_R, 1 / kappa_S, 0.5, 1 / (kappa_R * L_hat_H))


def local_constant_inexact(L_H, L_hat_H, kappa_R, nu_R, kappa_S, eta1) -> float:
    return min(3 * (1 - eta1) / (2 * L_H), nu_R, 1 / kappa_S, 0.5, 1 / (kappa_R * (2 + L_hat_H)))


def min_term_exact(p: StrictSaddleParams) -> float:
    a, b, g, d = _low(p.alpha), _low(p.beta), _low(p.gamma), _low(p.delta)
    return min(a**2, a ** (4 / 3) * b, a ** (4 / 3) * g, a ** (2 / 3) * g**2, b**3, b**2 * g, b * g**2, g**3,
               g**2 * d)


def min_term_inexact(p: StrictSaddleParams) -> float:
    a, b, g, d = _low(p.alpha), _low(p.beta), _low(p.gamma), _low(p.delta)
    return min(a**2, a ** (4 / 3) * b, a ** (4 / 3) * g, b**3, b**2 * g, b * g**2, g**3, g * d**2)


@dataclass
class BudgetReport:
    solver: str
    c_delta: float | None = None
    delta_min: float | None = None
    c_Q: float | None = None
    local_phase_iterations: int | None = None
    successful_bound: float | None = None
    total_bound: float | None = None
    c_delta_inexact: float | None = None
    delta_min_inexact: float | None = None
    c_Q_inexact: float | None = None
    successful_bound_inexact: float | None = None
    total_bound_inexact: float | None = None
    j_cg: int | None = None
    j_meo: int | None = None
    hvp_bound: float | None = None
    gaps: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


_NEEDED = ("L_H", "L_hat_H", "kappa_R", "nu_R", "kappa_S", "f0")


def theory_budgets(objective, params: StrictSaddleParams, config, measured: Mapping[str, float | None],
                   solver: str = "exact", j_cg: int | None = None, j_meo: int | None = None) -> BudgetReport:
    """Evaluate the radius floors, local-phase constants and iteration/product bounds."""
    rep = BudgetReport(solver=solver, j_cg=j_cg, j_meo=j_meo)
    m = {k: measured.get(k) for k in _NEEDED}
    rep.gaps = [k for k, v in m.items() if v is None]
    kH = objective.kappa_H
    eta1, tau1, tau2, d0 = config.eta1, config.tau1, config.tau2, config.delta0
    L = math.log(1 / tau1) / math.log(tau2)

    def logt(v):
        return math.log(v) / math.log(tau2)

    L_H, Lh, kR, nuR, kS, f0 = (m[k] for k in _NEEDED)
    gap_f = None if f0 is None else f0 - objective.lower_bound
    a, b, g = params.alpha, params.beta, params.gamma

    if L_H is not None:
        rep.c_delta = radius_constant_exact(L_H, kH, eta1, tau1)
        rep.delta_min = radius_floor(rep.c_delta, d0, params)
        rep.c_delta_inexact = radius_constant_inexact(L_H, kH, eta1, tau1)
        rep.delta_min_inexact = radius_floor(rep.c_delta_inexact, d0, params)
    if None not in (L_H, Lh, kR, nuR, kS):
        rep.c_Q = local_constant_exact(L_H, Lh, kR, nuR, kS, eta1)
        rep.c_Q_inexact = local_constant_inexact(L_H, Lh, kR, nuR, kS, eta1)
    if None not in (Lh, kR):
        rep.local_phase_iterations = local_phase_cap(g, kR, Lh, config.eps_g)
    if None in (L_H, Lh, kR, nuR, kS, f0):
        return rep

    # exact solver
    cd, cQ = rep.c_delta, rep.c_Q
    C = gap_f / eta1 * (4 * max(kH, 1 / (cd * d0), 1 / cd) + 6 * max((cd * d0) ** -2, cd**-2)
                        + 2 / nuR**2 + kR * Lh * max(1 / cQ, 1 / (cd * d0), 1 / cd))
    rep.successful_bound = C / min_term_exact(params) + 1 + loglog_term(2 * g**2, kR * Lh * config.eps_g)
    rep.total_bound = (1 + L) / L * rep.successful_bound + (1 / L) * max(
        logt(1 / cd), logt(d0 / (cd * math.sqrt(a))), logt(d0 / (cd * a ** (2 / 3))), logt(d0 / (cd * b)),
        logt(d0 / (cd * g)))

    # inexact solver
    cdt, cQt = rep.c_delta_inexact, rep.c_Q_inexact
    Ct = 4 * gap_f / eta1 * (max(d0**-2, 1.0) + max(kH, 1 / (cdt * d0), 1 / cdt) + nuR**-2
                             + (kR**2 + 2 * Lh * kR) / 2 * max((cdt * d0) ** -2, cQt**-2))
    rep.successful_bound_inexact = Ct / min_term_inexact(params) + 1 + loglog_term(
        2 * _low(g) ** 2, kR * Lh * config.eps_g)
    rep.total_bound_inexact = (1 + L) / L * rep.successful_bound_inexact + (1 / L) * max(
        0.0, logt(1 / cdt), logt(d0 / (cdt * _low(a) ** (2 / 3))), logt(d0 / (cdt * _low(b))),
        logt(d0 / (cdt * _low(g))))
    if j_cg is not None and j_meo is not None:
        rep.hvp_bound = max(j_cg, j_meo) * rep.total_bound_inexact
    return rep
