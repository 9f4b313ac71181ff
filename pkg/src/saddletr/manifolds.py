"""Embedded manifolds with ambient-coordinate points and tangent vectors.

Two instances ship: Euclidean space and the unit sphere with the metric
projection retraction. Solvers work on raw ambient arrays internally; the
``ManifoldPoint``/``TangentVector`` wrappers are the public currency and
carry the base-point bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]


class ManifoldError(ValueError):
    """Raised on invalid points, base mismatches or out-of-domain steps."""


@dataclass(frozen=True)
class ManifoldSpec:
    ambient_dim: int
    intrinsic_dim: int
    retraction_domain_radius: float


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    coords: Array
    manifold_id: str

    def same_as(self, other: "ManifoldPoint") -> bool:
        return self is other or (
            self.manifold_id == other.manifold_id
            and np.array_equal(self.coords, other.coords)
        )


@dataclass(frozen=True, eq=False)
class TangentVector:
    components: Array
    base: ManifoldPoint

    def _check(self, other: "TangentVector") -> None:
        if not self.base.same_as(other.base):
            raise ManifoldError("tangent vectors live at different base points")

    def __add__(self, other: "TangentVector") -> "TangentVector":
        self._check(other)
        return TangentVector(self.components + other.components, self.base)

    def __sub__(self, other: "TangentVector") -> "TangentVector":
        self._check(other)
        return TangentVector(self.components - other.components, self.base)

    def __neg__(self) -> "TangentVector":
        return TangentVector(-self.components, self.base)

    def __mul__(self, c: float) -> "TangentVector":
        return TangentVector(c * self.components, self.base)

    __rmul__ = __mul__


class Manifold:
    """Common surface of the shipped manifolds."""

    name: str = "manifold"

    def __init__(self, ambient_dim: int):
        if ambient_dim < 1:
            raise ManifoldError("ambient dimension must be positive")
        self.ambient_dim = int(ambient_dim)

    # -- metadata ---------------------------------------------------------
    @property
    def intrinsic_dim(self) -> int:
        raise NotImplementedError

    @property
    def retraction_domain_radius(self) -> float:
        return math.inf

    @property
    def spec(self) -> ManifoldSpec:
        return ManifoldSpec(self.ambient_dim, self.intrinsic_dim, self.retraction_domain_radius)

    @property
    def manifold_id(self) -> str:
        return f"{self.name}({self.ambient_dim})"

    # -- point and vector construction -------------------------------------
    def point(self, coords) -> ManifoldPoint:
        c = np.array(coords, dtype=float).reshape(-1)
        if c.shape[0] != self.ambient_dim:
            raise ManifoldError(f"expected {self.ambient_dim} coordinates, got {c.shape[0]}")
        if not np.all(np.isfinite(c)):
            raise ManifoldError("point has non-finite coordinates")
        self._check_point(c)
        c.setflags(write=False)
        return ManifoldPoint(c, self.manifold_id)

    def _check_point(self, c: Array) -> None:
        pass

    def _own(self, x: ManifoldPoint) -> None:
        if x.manifold_id != self.manifold_id:
            raise ManifoldError(f"point belongs to {x.manifold_id}, not {self.manifold_id}")

    def project_to_tangent(self, x: ManifoldPoint, w) -> TangentVector:
        self._own(x)
        w = np.asarray(w, dtype=float).reshape(-1)
        if w.shape[0] != self.ambient_dim:
            raise ManifoldError("dimension mismatch in tangent projection")
        return TangentVector(self.proj(x.coords, w), x)

    def zero(self, x: ManifoldPoint) -> TangentVector:
        return TangentVector(np.zeros(self.ambient_dim), x)

    def inner(self, u: TangentVector, v: TangentVector) -> float:
        if not u.base.same_as(v.base):
            raise ManifoldError("inner product of vectors at different base points")
        return float(np.dot(u.components, v.components))

    def norm(self, v: TangentVector) -> float:
        # scaled so that tiny nonzero vectors do not underflow to norm 0
        m = float(np.max(np.abs(v.components), initial=0.0))
        if m == 0.0:
            return 0.0
        return m * float(np.linalg.norm(v.components / m))

    def retract(self, x: ManifoldPoint, s: TangentVector) -> ManifoldPoint:
        self._own(x)
        if not s.base.same_as(x):
            raise ManifoldError("step is not tangent at the given point")
        if np.linalg.norm(s.components) > self.retraction_domain_radius:
            raise ManifoldError("step leaves the retraction domain")
        y = self.retr(x.coords, s.components)
        y.setflags(write=False)
        return ManifoldPoint(y, self.manifold_id)

    def distance(self, x: ManifoldPoint, y: ManifoldPoint) -> float:
        self._own(x)
        self._own(y)
        return self.dist(x.coords, y.coords)

    # -- raw-array kernels used inside the solvers --------------------------
    def proj(self, x: Array, w: Array) -> Array:
        raise NotImplementedError

    def retr(self, x: Array, s: Array) -> Array:
        raise NotImplementedError

    def displacement(self, x: Array, s: Array) -> Array:
        """R_x(s) - x, computed without cancellation for small s."""
        raise NotImplementedError

    def dist(self, x: Array, y: Array) -> float:
        raise NotImplementedError

    def tangent_basis(self, x: Array) -> Array:
        """Orthonormal basis of the tangent space as columns (ambient x intrinsic)."""
        raise NotImplementedError

    def pullback_gradient(self, x: Array, s: Array, grad_y: Array) -> Array:
        """Gradient at s of f composed with R_x, given the Riemannian gradient at R_x(s)."""
        raise NotImplementedError

    def random_point(self, rng: np.random.Generator) -> ManifoldPoint:
        raise NotImplementedError

    def random_tangent(self, x: Array, rng: np.random.Generator) -> Array:
        return self.proj(x, rng.standard_normal(self.ambient_dim))


class Euclidean(Manifold):
    name = "euclidean"

    @property
    def intrinsic_dim(self) -> int:
        return self.ambient_dim

    def proj(self, x, w):
        return np.array(w, dtype=float)

    def retr(self, x, s):
        return x + s

    def displacement(self, x, s):
        return np.array(s, dtype=float)

    def dist(self, x, y):
        return float(np.linalg.norm(x - y))

    def tangent_basis(self, x):
        return np.eye(self.ambient_dim)

    def pullback_gradient(self, x, s, grad_y):
        return np.array(grad_y, dtype=float)

    def random_point(self, rng, scale: float = 1.0):
        return self.point(scale * rng.standard_normal(self.ambient_dim))


class Sphere(Manifold):
    """Unit sphere S^{n-1} in R^n with the retraction (x+s)/||x+s||."""

    name = "sphere"
    point_tol = 1e-12

    def __init__(self, ambient_dim: int):
        if ambient_dim < 2:
            raise ManifoldError("sphere needs ambient dimension >= 2")
        super().__init__(ambient_dim)

    @property
    def intrinsic_dim(self) -> int:
        return self.ambient_dim - 1

    def _check_point(self, c):
        if abs(np.linalg.norm(c) - 1.0) > self.point_tol:
            raise ManifoldError(f"point is not on the unit sphere (norm {np.linalg.norm(c)!r})")

    def normalize(self, v) -> ManifoldPoint:
        v = np.asarray(v, dtype=float)
        return self.point(v / np.linalg.norm(v))

    def proj(self, x, w):
        return w - np.dot(w, x) * x

    def retr(self, x, s):
        v = x + s
        return v / np.linalg.norm(v)

    def displacement(self, x, s):
        # For tangent s, ||x+s|| = sqrt(1 + |s|^2), and ||x+s|| - 1 is formed stably.
        ss = float(np.dot(s, s))
        r = math.sqrt(1.0 + ss)
        return (s - (ss / (r + 1.0)) * x) / r

    def dist(self, x, y):
        # Angle between unit vectors; arccos(<x, y>) loses half the digits for nearby points.
        return float(2.0 * np.arctan2(np.linalg.norm(x - y), np.linalg.norm(x + y)))

    def tangent_basis(self, x):
        # Householder reflector mapping x to -sign(x0) e0; its other columns span x-perp.
        n = self.ambient_dim
        v = np.array(x, dtype=float)
        sgn = 1.0 if v[0] >= 0 else -1.0
        v[0] += sgn
        h = np.eye(n) - 2.0 * np.outer(v, v) / np.dot(v, v)
        return h[:, 1:]

    def pullback_gradient(self, x, s, grad_y):
        return self.proj(x, grad_y) / np.linalg.norm(x + s)

    def random_point(self, rng):
        return self.normalize(rng.standard_normal(self.ambient_dim))
