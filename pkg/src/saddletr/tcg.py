"""Truncated conjugate gradients with curvature-gamma exits and a capped iteration count."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .manifolds import Array, TangentVector
from .model import InvalidModelError, QuadraticModel

NOT_STRONGLY_CONVEX = "not_strongly_convex"
BOUNDARY_STEP = "boundary_step"
SMALL_RESIDUAL = "small_residual"
MAX_ITER = "max_iter"
FLAGS = (NOT_STRONGLY_CONVEX, BOUNDARY_STEP, SMALL_RESIDUAL, MAX_ITER)


@dataclass(frozen=True)
class TcgConfig:
    zeta: float
    gamma: float
    kappa_H: float
    eps_g: float
    dim: int

    def __post_init__(self):
        if not 0 < self.zeta < 1:
            raise ValueError("zeta must lie in (0, 1)")
        for name in ("gamma", "kappa_H", "eps_g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.dim < 1:
            raise ValueError("dim must be positive")


@dataclass(frozen=True)
class TcgOutcome:
    step: TangentVector
    flag: str
    iterations: int
    hvp_count: int
    model_decrease: float
    hess_step: Array
    # Cauchy point of the model (minimizer along -g inside the ball), built from
    # the first product H g so the driver can fall back on it at no extra cost.
    cauchy_step: Array
    cauchy_decrease: float
    cauchy_hess_step: Array


def jcg_formula(cfg: TcgConfig) -> float:
    ratio = cfg.kappa_H / cfg.gamma
    inner = (2.0 * math.sqrt(cfg.kappa_H) / (cfg.zeta * math.sqrt(cfg.gamma))) * max(
        cfg.eps_g**-2, cfg.eps_g**-1, ratio
    )
    return 0.5 * math.sqrt(ratio) * math.log(inner)


def jcg_cap(cfg: TcgConfig) -> int:
    return max(1, math.ceil(min(float(cfg.dim), jcg_formula(cfg))))


def _to_boundary(y: Array, p: Array, radius: float) -> float:
    """Positive root sigma of ||y + sigma p|| = radius (stable quadratic formula)."""
    a = float(p @ p)
    b = 2.0 * float(y @ p)
    c = float(y @ y) - radius * radius
    disc = math.sqrt(max(b * b - 4.0 * a * c, 0.0))
    if c >= 0:  # y already on/over the boundary; should not happen, take the smallest move
        return max(0.0, (-b + disc) / (2 * a)) if b < 0 else 0.0
    # c < 0 so roots have opposite signs; pick the positive one without cancellation
    q = -0.5 * (b + math.copysign(disc, b))
    r1, r2 = q / a, c / q
    return max(r1, r2)


def _decrease(g: Array, s: Array, hs: Array) -> float:
    return -float(g @ s) - 0.5 * float(s @ hs)


def tcg_solve(model: QuadraticModel, radius: float, cfg: TcgConfig, cap: int | None = None) -> TcgOutcome:
    if not radius > 0:
        raise ValueError("radius must be positive")
    model.check_finite()
    g = model.g
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0:
        raise ValueError("tCG requires a nonzero gradient")
    if cap is None:
        cap = jcg_cap(cfg)
    gamma = cfg.gamma
    base = model.base
    small_rhs_g = cfg.zeta * min(gnorm * gnorm, gnorm)

    y = np.zeros_like(g)
    hy = np.zeros_like(g)
    r = g.copy()
    p = -g
    rr = gnorm * gnorm
    hvp = 0
    cauchy = None

    def out(step, hstep, flag, it):
        return TcgOutcome(TangentVector(step, base), flag, it, hvp, _decrease(g, step, hstep),
                          hstep, *cauchy)

    for j in range(cap):
        hp = model.hess(p)
        hvp += 1
        php = float(p @ hp)
        if not math.isfinite(php):
            raise InvalidModelError("non-finite curvature in tCG")
        if cauchy is None:
            # p0 = -g, so H g = -hp
            t = radius / gnorm if php <= 0 else min(radius / gnorm, rr / php)
            cs, hcs = -t * g, t * hp
            cauchy = (cs, _decrease(g, cs, hcs), hcs)
        ynorm2 = float(y @ y)
        if ynorm2 > 0 and float(y @ hy) < gamma * ynorm2:
            scale = radius / math.sqrt(ynorm2)
            return out(scale * y, scale * hy, NOT_STRONGLY_CONVEX, j)
        pnorm2 = float(p @ p)
        if php < gamma * pnorm2:
            scale = radius / math.sqrt(pnorm2)
            return out(scale * p, scale * hp, NOT_STRONGLY_CONVEX, j)
        sigma = rr / php
        y_next = y + sigma * p
        if float(np.linalg.norm(y_next)) >= radius:
            sb = _to_boundary(y, p, radius)
            return out(y + sb * p, hy + sb * hp, BOUNDARY_STEP, j + 1)
        assert float(y_next @ y_next) >= ynorm2 * (1 - 1e-12), "tCG iterate norms must not decrease"
        y = y_next
        hy = hy + sigma * hp
        r = r + sigma * hp
        rr_next = float(r @ r)
        rnorm = math.sqrt(rr_next)
        if rr_next == 0.0 or rnorm <= min(small_rhs_g, cfg.zeta * gamma * float(np.linalg.norm(y))):
            return out(y, hy, SMALL_RESIDUAL, j + 1)
        p = -r + (rr_next / rr) * p
        rr = rr_next
    return out(y, hy, MAX_ITER, cap)
