import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import fd_directional, fd_second, random_sphere_point, sphere_retract, tangent_unit
from saddletr import (QuadraticProblem, RayleighProblem, StrictSaddleParams, classify_region,
                      rayleigh_saddle_params, strongly_convex_quadratic, symmetric_with_spectrum)
from saddletr.problems import ProblemError

seeds = st.integers(0, 2**32 - 1)
D321 = RayleighProblem(np.diag([3.0, 2.0, 1.0]))
E = np.eye(3)


def random_rayleigh(seed, n):
    rng = np.random.default_rng(seed)
    eig = np.sort(rng.uniform(-2, 2, n))
    eig[0] -= 0.5
    eig[-1] += 0.5
    return RayleighProblem(symmetric_with_spectrum(eig, seed=seed))


class TestRayleighValues:
    def test_eval(self):
        assert D321.f(E[0]) == 3
        assert D321.f(E[2]) == 1
        assert D321.f(np.array([1, 0, 1]) / math.sqrt(2)) == pytest.approx(2, abs=1e-15)

    def test_gradient_zero_at_eigenvectors(self):
        for i in range(3):
            np.testing.assert_array_equal(D321.grad(E[i]), 0)

    def test_hess_vec_diagonal_cases(self):
        np.testing.assert_allclose(D321.hvp(E[2], E[0]), 4 * E[0])
        np.testing.assert_allclose(D321.hvp(E[1], E[2]), -2 * E[2])
        np.testing.assert_array_equal(D321.hvp(E[0], np.zeros(3)), 0)

    def test_hessian_min_eig_at_eigenvectors(self):
        assert D321.hessian_min_eig(E[1]) == pytest.approx(-2)
        assert D321.hessian_min_eig(E[2]) == pytest.approx(2)

    def test_constants(self):
        assert D321.kappa_H == 4
        assert D321.lower_bound == 1
        np.testing.assert_allclose(abs(D321.minimizers()[0]), E[2])


@settings(max_examples=30)
@given(seeds, st.integers(3, 10))
def test_rayleigh_gradient_matches_fd(seed, n):
    P = random_rayleigh(seed, n)
    rng = np.random.default_rng(seed + 1)
    for _ in range(4):
        x = random_sphere_point(rng, n)
        v = tangent_unit(rng, x)
        g = P.grad(x)
        assert abs(g @ x) <= 1e-13
        fd = fd_directional(P.f, sphere_retract, x, v)
        assert g @ v == pytest.approx(fd, rel=1e-5, abs=1e-8)


@settings(max_examples=30)
@given(seeds, st.integers(3, 10))
def test_rayleigh_hessian_matches_fd(seed, n):
    P = random_rayleigh(seed, n)
    rng = np.random.default_rng(seed + 2)
    for _ in range(4):
        x = random_sphere_point(rng, n)
        v = tangent_unit(rng, x)
        hv = P.hvp(x, v)
        assert abs(hv @ x) <= 1e-12
        assert v @ hv == pytest.approx(fd_second(P.f, sphere_retract, x, v), abs=1e-4)


@settings(max_examples=30)
@given(seeds, st.integers(3, 10))
def test_rayleigh_hessian_self_adjoint_and_bounded(seed, n):
    P = random_rayleigh(seed, n)
    rng = np.random.default_rng(seed + 3)
    x = random_sphere_point(rng, n)
    u, v = tangent_unit(rng, x), tangent_unit(rng, x)
    assert abs(u @ P.hvp(x, v) - v @ P.hvp(x, u)) <= 1e-10
    assert np.linalg.norm(P.hvp(x, v)) <= P.kappa_H * (1 + 1e-12)


@given(seeds, st.integers(3, 10), st.floats(1e-12, 1.0))
def test_decrease_kernel_matches_difference(seed, n, scale):
    P = random_rayleigh(seed, n)
    rng = np.random.default_rng(seed)
    x = random_sphere_point(rng, n)
    s = scale * tangent_unit(rng, x)
    d = P.manifold.displacement(x, s)
    direct = P.f(x) - P.f(x + d)
    assert P.decrease(x, d) == pytest.approx(direct, abs=1e-14)


def test_symmetric_with_spectrum_exact():
    eig = np.linspace(1, 3, 20)
    A = symmetric_with_spectrum(eig, seed=4)
    np.testing.assert_allclose(A, A.T, atol=0)
    np.testing.assert_allclose(np.linalg.eigvalsh(A), eig, atol=1e-13)
    np.testing.assert_array_equal(A, symmetric_with_spectrum(eig, seed=4))
    assert not np.array_equal(A, symmetric_with_spectrum(eig, seed=5))


class TestRayleighValidation:
    def test_asymmetric(self):
        with pytest.raises(ProblemError):
            RayleighProblem(np.array([[1.0, 1.0], [0.0, 2.0]]))

    def test_no_bottom_gap(self):
        with pytest.raises(ProblemError):
            RayleighProblem(np.diag([3.0, 1.0, 1.0]))

    def test_no_top_gap(self):
        with pytest.raises(ProblemError):
            RayleighProblem(np.diag([3.0, 3.0, 1.0]))


class TestSaddleParams:
    def test_worked_example(self):
        p = rayleigh_saddle_params(D321, 1.0)
        assert (p.alpha, p.beta, p.gamma, p.delta) == pytest.approx((1 / 3, 1, 1, 2 / 3))

    def test_linear_in_c(self):
        p1, p2 = rayleigh_saddle_params(D321, 1.0), rayleigh_saddle_params(D321, 0.5)
        for a, b in zip((p1.alpha, p1.beta, p1.gamma, p1.delta), (p2.alpha, p2.beta, p2.gamma, p2.delta)):
            assert b == pytest.approx(a / 2)

    def test_vanishing_gap(self):
        p = rayleigh_saddle_params(RayleighProblem(np.diag([3.0, 1.0 + 1e-9, 1.0])), 1.0)
        assert max(p.alpha, p.beta, p.gamma, p.delta) < 1e-8

    def test_positive(self):
        with pytest.raises(ValueError):
            StrictSaddleParams(1.0, 0.0, 1.0, 1.0)
        with pytest.raises(ProblemError):
            rayleigh_saddle_params(D321, 0.0)


class TestClassify:
    params = StrictSaddleParams(0.1, 1.0, 1.0, 0.5)

    def test_saddle_is_r2(self):
        assert classify_region(D321, D321.manifold.point(E[1]), self.params) == "R2"

    def test_minimizer_is_r3(self):
        assert classify_region(D321, D321.manifold.point(E[2]), self.params) == "R3_candidate"

    def test_large_gradient_is_r1(self):
        x = np.array([1.0, 0, 1.0]) / math.sqrt(2)
        assert classify_region(D321, D321.manifold.point(x), StrictSaddleParams(0.5, 1, 1, 1)) == "R1"

    def test_middle_eigenvectors_r2(self):
        P = RayleighProblem(np.diag(np.linspace(5, 1, 5)))
        p = rayleigh_saddle_params(P, 1.0)
        for i in range(1, 4):
            x = P.manifold.point(np.eye(5)[i])
            assert P.hessian_min_eig(x.coords) == pytest.approx(2 * (1 - P.eigenvalues[::-1][i]))
            assert classify_region(P, x, p) == "R2"


class TestQuadratic:
    def test_identity(self):
        Q = strongly_convex_quadratic(np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(Q.xstar, 0)
        assert Q.lower_bound == 0

    def test_worked_minimizer(self):
        Q = QuadraticProblem(np.diag([1.0, 4.0]), np.array([1.0, 4.0]))
        np.testing.assert_allclose(Q.xstar, [1, 1])
        assert Q.gamma == 1
        np.testing.assert_allclose(Q.grad(Q.xstar), 0)

    def test_params(self):
        Q = QuadraticProblem(np.diag([2.0, 4.0]), np.zeros(2), alpha=0.5)
        p = Q.saddle_params()
        assert (p.alpha, p.beta, p.gamma, p.delta) == (0.5, 1.0, 2.0, 0.5)

    def test_rejects_indefinite(self):
        with pytest.raises(ProblemError):
            QuadraticProblem(np.diag([1.0, -1.0]), np.zeros(2))

    @given(seeds, st.integers(2, 8))
    def test_derivatives_match_fd(self, seed, n):
        rng = np.random.default_rng(seed)
        Q = QuadraticProblem(symmetric_with_spectrum(rng.uniform(0.5, 5, n), seed), rng.standard_normal(n))
        x = rng.standard_normal(n)
        v = tangent_unit(rng, n=n)
        add = lambda a, b: a + b  # noqa: E731
        assert Q.grad(x) @ v == pytest.approx(fd_directional(Q.f, add, x, v), rel=1e-6, abs=1e-8)
        assert v @ Q.hvp(x, v) == pytest.approx(fd_second(Q.f, add, x, v), abs=1e-4)
        d = 1e-3 * v
        assert Q.decrease(x, d) == pytest.approx(Q.f(x) - Q.f(x + d), abs=1e-12)

    def test_fingerprint_depends_on_data(self):
        a = QuadraticProblem(np.eye(2), np.ones(2)).fingerprint()
        assert a == QuadraticProblem(np.eye(2), np.ones(2)).fingerprint()
        assert a != QuadraticProblem(np.eye(2), np.zeros(2)).fingerprint()
