"""Global solution of the trust-region subproblem at desk scale.

The Hessian is densified in an orthonormal tangent basis and diagonalised;
the multiplier then solves a one-dimensional secular equation by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .manifolds import Array, TangentVector
from .model import InvalidModelError, QuadraticModel

SECULAR_RTOL = 1e-10
SECULAR_MAXITER = 200
HARD_CASE_TOL = 1e-12


@dataclass(frozen=True)
class ExactSolution:
    step: TangentVector
    multiplier: float
    on_boundary: bool
    model_decrease: float
    hess_step: Array
    min_eig: float
    hvp_count: int
    hard_case: bool = False


def _boundary_fill(y: Array, a: Array, idx: int, radius: float) -> Array:
    """Add a multiple of eigenvector ``idx`` to reach the boundary, keeping <s, g> <= 0."""
    tau = np.sqrt(max(radius**2 - float(y @ y), 0.0))
    plus = y.copy()
    plus[idx] += tau
    minus = y.copy()
    minus[idx] -= tau
    return minus if float(minus @ a) < float(plus @ a) else plus


def solve_in_eigenbasis(mu: Array, a: Array, radius: float, gnorm: float):
    """Trust-region solve for diag(mu) and gradient coordinates a.

    Returns (y, lambda, hard_case).
    """
    mu_min = float(mu[0])
    if mu_min > 0:
        y = -a / mu
        if np.linalg.norm(y) <= radius:
            return y, 0.0, False

    scale = max(1.0, float(np.max(np.abs(mu))))
    lowest = np.flatnonzero(mu - mu_min <= 1e-12 * scale)
    if mu_min <= 0 and np.all(np.abs(a[lowest]) <= HARD_CASE_TOL * gnorm):
        p = np.zeros_like(a)
        rest = np.setdiff1d(np.arange(mu.size), lowest)
        p[rest] = -a[rest] / (mu[rest] - mu_min)
        if np.linalg.norm(p) <= radius:
            return _boundary_fill(p, a, int(lowest[0]), radius), -mu_min, True

    lo = max(0.0, -mu_min)
    hi = lo + gnorm / radius
    lam = hi
    converged = False
    for _ in range(SECULAR_MAXITER):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        nrm = float(np.linalg.norm(a / (mu + mid)))
        if abs(nrm - radius) <= SECULAR_RTOL * radius:
            lam, converged = mid, True
            break
        if nrm > radius:
            lo = mid
        else:
            hi = mid
    if not converged:
        lam = hi
    y = -a / (mu + lam)
    if not converged and np.linalg.norm(y) < radius * (1 - SECULAR_RTOL):
        # nearly hard case: the bracket collapsed before reaching the boundary
        y = _boundary_fill(y, a, 0, radius)
        return y, lam, True
    # The bisection stops within a relative 1e-10 of the sphere. Snapping onto it
    # keeps the step feasible, and moving outward lowers the model since the
    # radial derivative there is -lambda |y|^2.
    nrm = float(np.linalg.norm(y))
    if nrm > radius or lam > 0:
        y *= radius / nrm
    return y, lam, False


def solve_exact(model: QuadraticModel, radius: float) -> ExactSolution:
    """Global minimizer of the model over the ball of the given radius."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    model.check_finite()
    H, basis = model.dense()
    gc = basis.T @ model.g
    gnorm = float(np.linalg.norm(gc))
    mu, Q = np.linalg.eigh(H)
    a = Q.T @ gc
    y, lam, hard = solve_in_eigenbasis(mu, a, radius, gnorm)
    s = basis @ (Q @ y)
    hs = basis @ (Q @ (mu * y))
    decrease = -float(a @ y) - 0.5 * float(y @ (mu * y))
    on_boundary = bool(lam > 0 or np.linalg.norm(y) >= radius * (1 - SECULAR_RTOL))
    return ExactSolution(
        step=TangentVector(s, model.base),
        multiplier=float(lam),
        on_boundary=on_boundary,
        model_decrease=decrease,
        hess_step=hs,
        min_eig=float(mu[0]),
        hvp_count=basis.shape[1],
        hard_case=hard,
    )


ORACLE_MAX_DIM = 12


def brute_force_oracle(model: QuadraticModel, radius: float) -> float:
    """Minimum model value over the ball, by enumerating candidate minimizers.

    Test-only: refuses intrinsic dimension above 12.
    """
    man = model.manifold
    if man.intrinsic_dim > ORACLE_MAX_DIM:
        raise ValueError("brute-force oracle is limited to intrinsic dimension <= 12")
    x = model.base.coords
    P = np.column_stack([man.proj(x, e) for e in np.eye(man.ambient_dim)])
    B = scipy.linalg.orth(P)
    HB = np.column_stack([model.hess(B[:, j]) for j in range(B.shape[1])])
    H = B.T @ HB
    H = 0.5 * (H + H.T)
    g = B.T @ model.g
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(g))):
        raise InvalidModelError("non-finite model")
    w, V = np.linalg.eigh(H)
    c = V.T @ g
    d2 = radius * radius

    def val(s):
        return float(g @ s + 0.5 * s @ H @ s)

    cands = [np.zeros_like(g)]
    for j in range(w.size):
        cands += [radius * V[:, j], -radius * V[:, j]]
    gn = np.linalg.norm(g)
    if gn > 0:
        cands.append(-min(radius / gn, gn**2 / max(float(g @ H @ g), 1e-300)) * g
                     if g @ H @ g > 0 else -radius / gn * g)
    if w[0] > 0:
        cands.append(np.linalg.solve(H, -g))

    def phi(lmb):
        return float(np.sum(c**2 / (w + lmb) ** 2)) - d2

    lower = max(0.0, -w[0])
    upper = lower + 1.0
    while phi(upper) > 0:
        upper = lower + 2.0 * (upper - lower)
    left, right = lower, upper
    for _ in range(400):
        mid = 0.5 * (left + right)
        if mid in (left, right):
            break
        if phi(mid) > 0:
            left = mid
        else:
            right = mid
    cands.append(V @ (-c / (w + right)))

    tol = 1e-9 * max(1.0, np.max(np.abs(w)))
    low = w <= w[0] + tol
    if w[0] <= 0:
        q = np.where(low, 0.0, -c / np.where(low, 1.0, w - w[0]))
        p = V @ q
        pn2 = float(p @ p)
        if pn2 <= d2:
            t = np.sqrt(d2 - pn2)
            for j in np.flatnonzero(low):
                cands += [p + t * V[:, j], p - t * V[:, j]]

    best = np.inf
    for s in cands:
        n = np.linalg.norm(s)
        if n > radius:
            s = s * (radius / n)
        best = min(best, val(s))
    return model.f0 + best
