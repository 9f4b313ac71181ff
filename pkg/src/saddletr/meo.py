"""Minimum eigenvalue oracle: certify lambda_min(H) >= -beta or return a negative-curvature step.

Two modes. ``dense`` builds the full tangent Hessian and is deterministic.
``lanczos`` runs Lanczos with full reorthogonalisation from a seeded random
unit vector and stops at the iteration cap, which makes its certificate
probabilistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .manifolds import Array, TangentVector
from .model import InvalidModelError, QuadraticModel

LANCZOS = "lanczos"
DENSE = "dense"


@dataclass(frozen=True)
class MeoConfig:
    beta: float
    failure_prob: float
    kappa_H: float
    dim: int
    mode: str = LANCZOS
    seed: int = 0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not 0 <= self.failure_prob < 1:
            raise ValueError("failure_prob must lie in [0, 1)")
        if not self.kappa_H > 0:
            raise ValueError("kappa_H must be positive")
        if self.mode not in (LANCZOS, DENSE):
            raise ValueError(f"unknown MEO mode {self.mode!r}")


@dataclass(frozen=True)
class MeoOutcome:
    certificate: bool
    direction: TangentVector | None
    curvature: float  # <s, H s> / ||s||^2 of the direction, or the smallest eigenvalue seen
    hvp_count: int
    mode: str
    hess_step: Array | None = None


def jmeo_cap(dim: int, failure_prob: float, kappa_H: float, beta: float) -> int:
    if failure_prob <= 0:
        return dim
    val = 1 + math.ceil(0.5 * math.log(2.75 * dim / failure_prob**2) * math.sqrt(kappa_H / beta))
    return min(dim, val)


def _orient(g: Array, s: Array, hs: Array) -> tuple[Array, Array]:
    if float(g @ s) > 0:
        return -s, -hs
    return s, hs


def _direction(model, radius, u, hu, curv, hvp, mode) -> MeoOutcome:
    nrm = float(np.linalg.norm(u))
    s, hs = _orient(model.g, u * (radius / nrm), hu * (radius / nrm))
    return MeoOutcome(False, TangentVector(s, model.base), curv, hvp, mode, hs)


def meo_run(model: QuadraticModel, radius: float, cfg: MeoConfig) -> MeoOutcome:
    if not radius > 0:
        raise ValueError("radius must be positive")
    model.check_finite()
    if cfg.mode == DENSE:
        return _meo_dense(model, radius, cfg)
    return _meo_lanczos(model, radius, cfg)


def _meo_dense(model, radius, cfg):
    H, basis = model.dense()
    w, V = np.linalg.eigh(H)
    hvp = basis.shape[1]
    if w[0] >= -cfg.beta:
        return MeoOutcome(True, None, float(w[0]), hvp, DENSE)
    u = basis @ V[:, 0]
    return _direction(model, radius, u, w[0] * u, float(w[0]), hvp, DENSE)


def _meo_lanczos(model, radius, cfg):
    man = model.manifold
    x = model.base.coords
    n = man.intrinsic_dim
    cap = jmeo_cap(n, cfg.failure_prob, cfg.kappa_H, cfg.beta)
    rng = np.random.default_rng(cfg.seed)
    v = man.proj(x, rng.standard_normal(man.ambient_dim))
    v /= np.linalg.norm(v)
    V, W = [], []  # Lanczos vectors and their images
    alphas, betas = [], []
    thresh = -0.5 * cfg.beta
    theta_min = math.inf
    for j in range(cap):
        V.append(v)
        hv = model.hess(v)
        if not np.all(np.isfinite(hv)):
            raise InvalidModelError("Hessian operator produced non-finite values")
        W.append(hv)
        a = float(v @ hv)
        alphas.append(a)
        if j == 0:
            theta, y = np.array([a]), np.ones((1, 1))
        else:
            theta, y = scipy.linalg.eigh_tridiagonal(np.array(alphas), np.array(betas))
        theta_min = float(theta[0])
        if theta_min <= thresh:
            Vm, Wm = np.column_stack(V), np.column_stack(W)
            u, hu = Vm @ y[:, 0], Wm @ y[:, 0]
            curv = float(u @ hu) / float(u @ u)
            if curv <= thresh:
                return _direction(model, radius, u, hu, curv, j + 1, LANCZOS)
        r = hv - a * v
        if j > 0:
            r -= betas[-1] * V[-2]
        Vm = np.column_stack(V)
        for _ in range(2):
            r -= Vm @ (Vm.T @ r)
        b = float(np.linalg.norm(r))
        if b <= 1e-10 * max(abs(a), abs(betas[-1]) if betas else 0.0, 1e-300):
            break  # invariant subspace found
        betas.append(b)
        v = r / b
    return MeoOutcome(True, None, theta_min, len(V), LANCZOS)
