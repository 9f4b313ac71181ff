import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import ball_minimum_grid
from saddletr import QuadraticModel, brute_force_oracle, solve_exact
from saddletr.model import InvalidModelError
from saddletr.problems import random_orthogonal

seeds = st.integers(0, 2**32 - 1)


def instance(seed, n, hard=False):
    rng = np.random.default_rng(seed)
    eig = rng.uniform(-3, 3, n)
    U = random_orthogonal(n, rng)
    H = U @ np.diag(eig) @ U.T
    H = 0.5 * (H + H.T)
    g = rng.standard_normal(n) * 10 ** rng.uniform(-3, 1)
    if hard:
        i = int(np.argmin(eig))
        q = U[:, i]
        g -= (g @ q) * q
    radius = 10 ** rng.uniform(-2, 1)
    return H, g, radius


def kkt(H, g, radius, sol):
    s, lam = sol.step.components, sol.multiplier
    assert np.linalg.norm(s) <= radius * (1 + 1e-10)
    assert lam >= 0
    assert abs(lam * (radius - np.linalg.norm(s))) <= 1e-8 * max(1, lam, radius)
    assert np.linalg.norm((H + lam * np.eye(len(g))) @ s + g) <= 1e-8 * max(1.0, np.linalg.norm(g), lam * radius)
    assert np.linalg.eigvalsh(H + lam * np.eye(len(g)))[0] >= -1e-8


class TestExamples:
    def test_zero_gradient_identity(self):
        sol = solve_exact(QuadraticModel.from_matrix(np.eye(2), np.zeros(2)), 1.0)
        np.testing.assert_array_equal(sol.step.components, 0)
        assert sol.multiplier == 0

    def test_interior_newton(self):
        sol = solve_exact(QuadraticModel.from_matrix(np.diag([2.0, 4.0]), np.array([-2.0, 0.0])), 10.0)
        np.testing.assert_allclose(sol.step.components, [1, 0], atol=1e-14)
        assert sol.multiplier == 0 and not sol.on_boundary

    def test_boundary_secular(self):
        m = QuadraticModel.from_matrix(np.diag([-1.0, 2.0]), np.array([1.0, 0.0]))
        sol = solve_exact(m, 1.0)
        np.testing.assert_allclose(sol.step.components, [-1, 0], atol=1e-9)
        assert sol.multiplier == pytest.approx(2, abs=1e-8)
        assert sol.on_boundary
        assert sol.model_decrease == pytest.approx(1.5, abs=1e-9)
        assert m.f0 - sol.model_decrease == pytest.approx(brute_force_oracle(m, 1.0), abs=1e-10)

    def test_oracle_pure_negative_curvature(self):
        m = QuadraticModel.from_matrix(np.diag([-1.0, 1.0]), np.zeros(2))
        assert brute_force_oracle(m, 2.0) == pytest.approx(-2.0, abs=1e-12)

    def test_oracle_psd_zero_gradient(self):
        m = QuadraticModel.from_matrix(np.diag([0.0, 1.0]), np.zeros(2), f0=3.0)
        assert brute_force_oracle(m, 1.0) == pytest.approx(3.0, abs=1e-14)

    def test_hard_case_sign(self):
        g = np.array([0.0, 1.0])
        m = QuadraticModel.from_matrix(np.diag([-2.0, 1.0]), g)
        sol = solve_exact(m, 3.0)
        assert sol.hard_case and sol.on_boundary
        assert sol.step.components @ g <= 0
        assert m.f0 - sol.model_decrease == pytest.approx(brute_force_oracle(m, 3.0), abs=1e-9)


class TestErrors:
    def test_nonfinite(self):
        with pytest.raises(InvalidModelError):
            solve_exact(QuadraticModel.from_matrix(np.eye(2), np.array([np.nan, 0.0])), 1.0)

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            solve_exact(QuadraticModel.from_matrix(np.eye(2), np.ones(2)), 0.0)

    def test_oracle_refuses_large(self):
        with pytest.raises(ValueError):
            brute_force_oracle(QuadraticModel.from_matrix(np.eye(13), np.ones(13)), 1.0)


@settings(max_examples=150)
@given(seeds, st.integers(1, 8), st.booleans())
def test_kkt_conditions(seed, n, hard):
    H, g, radius = instance(seed, n, hard)
    kkt(H, g, radius, solve_exact(QuadraticModel.from_matrix(H, g), radius))


@settings(max_examples=150)
@given(seeds, st.integers(1, 8), st.booleans())
def test_matches_brute_force(seed, n, hard):
    H, g, radius = instance(seed, n, hard)
    m = QuadraticModel.from_matrix(H, g)
    sol = solve_exact(m, radius)
    assert m.value(sol.step.components) == pytest.approx(brute_force_oracle(m, radius), abs=1e-8)
    assert sol.model_decrease == pytest.approx(-m.value(sol.step.components), abs=1e-10)


@settings(max_examples=15, deadline=None)
@given(seeds, st.integers(2, 3))
def test_brute_force_below_sampled_minimum(seed, n):
    H, g, radius = instance(seed, n)
    m = QuadraticModel.from_matrix(H, g)
    assert brute_force_oracle(m, radius) <= ball_minimum_grid(H, g, radius, seed=seed) + 1e-12


@settings(max_examples=100)
@given(seeds, st.integers(2, 8))
def test_decrease_guarantees(seed, n):
    H, g, radius = instance(seed, n)
    assume(np.linalg.norm(g) > 0)
    m = QuadraticModel.from_matrix(H, g)
    sol = solve_exact(m, radius)
    w = np.linalg.eigvalsh(H)
    kappa = max(abs(w[0]), abs(w[-1]))
    gn = np.linalg.norm(g)
    tol = 1e-10 * max(1, sol.model_decrease)
    assert sol.model_decrease >= 0.5 * min(radius, gn / kappa) * gn - tol
    if w[0] < 0:
        assert sol.model_decrease >= 0.5 * (-w[0]) * radius**2 - tol
    else:
        s = np.linalg.norm(sol.step.components)
        assert sol.model_decrease >= 0.5 * w[0] * s**2 - tol
        assert s <= gn / w[0] * (1 + 1e-10)


def test_hvp_count_is_dimension():
    H, g, r = instance(0, 6)
    assert solve_exact(QuadraticModel.from_matrix(H, g), r).hvp_count == 6
