"""Second-order model of the pullback at a base point."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .manifolds import Array, Euclidean, Manifold, ManifoldPoint, TangentVector


class InvalidModelError(ValueError):
    """Non-finite data reached a subproblem solver."""


@dataclass(frozen=True, eq=False)
class QuadraticModel:
    """m(s) = f0 + <g, s> + 1/2 <s, H s> on the tangent space at ``base``.

    ``g`` is held as an ambient array; ``hess`` maps ambient tangent arrays
    to ambient tangent arrays.
    """

    f0: float
    g: Array
    hess: Callable[[Array], Array]
    base: ManifoldPoint
    manifold: Manifold

    @classmethod
    def from_objective(cls, objective, x: ManifoldPoint) -> "QuadraticModel":
        xc = x.coords
        return cls(
            f0=objective.f(xc),
            g=objective.grad(xc),
            hess=lambda v: objective.hvp(xc, v),
            base=x,
            manifold=objective.manifold,
        )

    @classmethod
    def from_matrix(cls, H, g, f0: float = 0.0) -> "QuadraticModel":
        """Model on R^n with an explicit symmetric matrix (handy for tests)."""
        H = np.array(H, dtype=float)
        g = np.array(g, dtype=float).reshape(-1)
        man = Euclidean(g.size)
        return cls(f0=float(f0), g=g, hess=lambda v: H @ v, base=man.point(np.zeros(g.size)), manifold=man)

    @property
    def gradient(self) -> TangentVector:
        return TangentVector(self.g, self.base)

    @property
    def dim(self) -> int:
        return self.manifold.intrinsic_dim

    def value(self, s: Array) -> float:
        return self.f0 + float(self.g @ s) + 0.5 * float(s @ self.hess(s))

    def decrease(self, s: Array, hs: Array | None = None) -> float:
        """m(0) - m(s); pass ``hs = H s`` to avoid an extra product."""
        if hs is None:
            hs = self.hess(s)
        return -float(self.g @ s) - 0.5 * float(s @ hs)

    def basis(self) -> Array:
        return self.manifold.tangent_basis(self.base.coords)

    def dense(self, basis: Array | None = None) -> tuple[Array, Array]:
        """Hessian matrix in an orthonormal tangent basis; costs ``basis.shape[1]`` products."""
        if basis is None:
            basis = self.basis()
        cols = [self.hess(basis[:, i]) for i in range(basis.shape[1])]
        hb = np.column_stack(cols) if cols else np.zeros((basis.shape[0], 0))
        m = basis.T @ hb
        if not np.all(np.isfinite(m)):
            raise InvalidModelError("Hessian operator produced non-finite values")
        return 0.5 * (m + m.T), basis

    def check_finite(self) -> None:
        if not (np.isfinite(self.f0) and np.all(np.isfinite(self.g))):
            raise InvalidModelError("model has non-finite value or gradient")
