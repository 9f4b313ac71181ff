"""Objectives with matrix-free Riemannian Hessians, and their strict-saddle parameters."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .manifolds import Array, Euclidean, Manifold, ManifoldPoint, Sphere, TangentVector


class ProblemError(ValueError):
    pass


@dataclass(frozen=True)
class StrictSaddleParams:
    """Thresholds (alpha, beta, gamma, delta) splitting the manifold into three regions."""

    alpha: float
    beta: float
    gamma: float
    delta: float

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ProblemError(f"strict-saddle parameter {name} must be positive, got {v!r}")


def random_orthogonal(n: int, rng: np.random.Generator) -> Array:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def symmetric_with_spectrum(eigenvalues, seed: int) -> Array:
    """U^T diag(eigenvalues) U with U orthogonal, drawn from a seeded Gaussian."""
    lam = np.asarray(eigenvalues, dtype=float)
    u = random_orthogonal(lam.size, np.random.default_rng(seed))
    a = u.T @ (lam[:, None] * u)
    return 0.5 * (a + a.T)


class Objective:
    """f, Riemannian gradient and Hessian-vector products on a manifold.

    Subclasses implement the raw kernels ``f``, ``grad`` and ``hvp`` over
    ambient arrays; the public ``eval``/``gradient``/``hess_vec`` wrap them.
    """

    kind = "objective"
    manifold: Manifold
    kappa_H: float
    lower_bound: float

    # raw kernels
    def f(self, x: Array) -> float:
        raise NotImplementedError

    def grad(self, x: Array) -> Array:
        raise NotImplementedError

    def hvp(self, x: Array, v: Array) -> Array:
        raise NotImplementedError

    def decrease(self, x: Array, d: Array) -> float:
        """f(x) - f(x + d) for a displacement d; subclasses avoid cancellation."""
        return self.f(x) - self.f(x + d)

    def minimizers(self) -> list[Array] | None:
        return None

    def fingerprint(self) -> str:
        raise NotImplementedError

    # public surface
    @property
    def hessian_norm_bound(self) -> float:
        return self.kappa_H

    def eval(self, x: ManifoldPoint) -> float:
        return self.f(x.coords)

    def gradient(self, x: ManifoldPoint) -> TangentVector:
        return TangentVector(self.grad(x.coords), x)

    def hess_vec(self, x: ManifoldPoint, v: TangentVector) -> TangentVector:
        if not v.base.same_as(x):
            raise ProblemError("Hessian applied to a vector from another tangent space")
        return TangentVector(self.hvp(x.coords, v.components), x)

    def hessian_matrix(self, x: Array) -> Array:
        """Hessian in the manifold's tangent basis at x (intrinsic_dim products)."""
        b = self.manifold.tangent_basis(x)
        hb = np.column_stack([self.hvp(x, b[:, i]) for i in range(b.shape[1])])
        m = b.T @ hb
        return 0.5 * (m + m.T)

    def hessian_min_eig(self, x: Array) -> float:
        return float(np.linalg.eigvalsh(self.hessian_matrix(x))[0])

    def dist_to_minimizer(self, x: Array) -> float:
        mins = self.minimizers()
        if not mins:
            return float("nan")
        return min(self.manifold.dist(x, m) for m in mins)


def _hash_array(tag: str, *arrays: Array) -> str:
    h = hashlib.sha256(tag.encode())
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


class RayleighProblem(Objective):
    """f(x) = x^T A x on the unit sphere."""

    kind = "rayleigh"

    def __init__(self, A, gap_tol: float = 1e-12):
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 2:
            raise ProblemError("A must be a square matrix of size >= 2")
        if np.max(np.abs(A - A.T)) > 1e-12:
            raise ProblemError("A must be symmetric")
        self.A = 0.5 * (A + A.T)
        self.A.setflags(write=False)
        n = A.shape[0]
        w, q = np.linalg.eigh(self.A)
        # ascending: w[0] = lambda_n, w[-1] = lambda_1
        scale = max(1.0, float(np.max(np.abs(w))))
        if w[-1] - w[-2] <= gap_tol * scale or w[1] - w[0] <= gap_tol * scale:
            raise ProblemError("A needs strictly positive top and bottom spectral gaps")
        self.eigenvalues = w
        self.eigenvectors = q
        self.manifold = Sphere(n)
        self.kappa_H = 2.0 * float(w[-1] - w[0])
        self.lower_bound = float(w[0])

    @property
    def lam_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def lam_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def bottom_gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])

    def f(self, x):
        return float(x @ self.A @ x)

    def grad(self, x):
        ax = self.A @ x
        g = 2.0 * (ax - float(x @ ax) * x)
        # A second projection removes the O(eps) normal component, which is not
        # negligible relative to |g| once the gradient itself is tiny.
        return g - float(g @ x) * x

    def hvp(self, x, v):
        w = self.A @ v - float(x @ self.A @ x) * v
        return 2.0 * (w - float(w @ x) * x)

    def decrease(self, x, d):
        return -float(2.0 * (d @ self.A @ x) + d @ self.A @ d)

    def minimizers(self):
        q = self.eigenvectors[:, 0]
        return [q.copy(), -q]

    def fingerprint(self):
        return f"rayleigh-{self.A.shape[0]}-" + _hash_array("rayleigh", self.A)

    def saddle_params(self, c: float = 1.0) -> StrictSaddleParams:
        return rayleigh_saddle_params(self, c)


def rayleigh_saddle_params(problem: RayleighProblem, c: float = 1.0) -> StrictSaddleParams:
    if not c > 0:
        raise ProblemError("c must be positive")
    gap = problem.bottom_gap
    lam1 = problem.lam_max
    return StrictSaddleParams(c * gap / lam1, c * gap, c * gap, 2.0 * c * gap / lam1)


class QuadraticProblem(Objective):
    """f(x) = 1/2 x^T Q x - b^T x on R^n with Q positive definite."""

    kind = "quadratic"

    def __init__(self, Q, b, alpha: float = 1.0):
        Q = np.array(Q, dtype=float)
        b = np.array(b, dtype=float).reshape(-1)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] != b.size:
            raise ProblemError("Q must be square and match b")
        if np.max(np.abs(Q - Q.T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
            raise ProblemError("Q must be symmetric")
        self.Q = 0.5 * (Q + Q.T)
        self.b = b
        self.Q.setflags(write=False)
        self.b.setflags(write=False)
        w = np.linalg.eigvalsh(self.Q)
        if w[0] <= 0:
            raise ProblemError("Q must be positive definite")
        self.eigenvalues = w
        self.gamma = float(w[0])
        self.alpha = float(alpha)
        self.manifold = Euclidean(b.size)
        self.kappa_H = float(w[-1])
        self.xstar = np.linalg.solve(self.Q, self.b)
        self.lower_bound = self.f(self.xstar)

    def f(self, x):
        return float(0.5 * x @ self.Q @ x - self.b @ x)

    def grad(self, x):
        return self.Q @ x - self.b

    def hvp(self, x, v):
        return self.Q @ v

    def decrease(self, x, d):
        return -float(d @ (self.Q @ x - self.b) + 0.5 * d @ self.Q @ d)

    def minimizers(self):
        return [self.xstar.copy()]

    def newton_step(self, x: Array) -> Array:
        return -np.linalg.solve(self.Q, self.Q @ x - self.b)

    def fingerprint(self):
        return f"quadratic-{self.b.size}-" + _hash_array("quadratic", self.Q, self.b)

    def saddle_params(self) -> StrictSaddleParams:
        return StrictSaddleParams(self.alpha, 1.0, self.gamma, 2.0 * self.alpha / self.gamma)


def strongly_convex_quadratic(Q, b, alpha: float = 1.0) -> QuadraticProblem:
    return QuadraticProblem(Q, b, alpha)
