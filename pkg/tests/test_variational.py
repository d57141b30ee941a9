import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from vsslab.model import InvalidParameterError, ProblemParams
from vsslab.variational import (MINIMIZER, InadmissibleFunctionError, WeightedFunction,
                                compare_with_profile, decreasing_rearrangement, est2_constant,
                                est2_constant_check, evaluate_J, gaussian_seed, gradient_J,
                                hermite_lowest_eigenvalue, minimize_J, project_cone,
                                random_admissible, threshold_curve, weighted_poincare_check)

P2 = ProblemParams(1, 2.0, 0.0)


def test_J_of_zero():
    w = WeightedFunction.on_grid(np.zeros_like, 1)
    assert evaluate_J(w, P2).total == 0.0


@pytest.mark.parametrize("params", [P2, ProblemParams(1, 3.0, 1.0), ProblemParams(2, 2.0, 0.5)])
@pytest.mark.parametrize("t", [0.1, 1.0, 7.5])
def test_J_along_ray_is_polynomial(params, t):
    # J(t v) = t^2 (G + M) + t^(p+1) A with G, M, A the parts of J(v)
    w = gaussian_seed(params.N, 1.0, n=400)
    base = evaluate_J(w, params)
    val = evaluate_J(w.with_values(t * w.v), params)
    expected = t ** 2 * (base.gradient + base.mass) + t ** (params.p + 1) * base.absorption
    assert val.total == pytest.approx(expected, rel=1e-12)


def test_J_parts_of_gaussian_seed():
    # v = K^-1 in one dimension: int v^2 K = 2 sqrt(pi), int v'^2 K = sqrt(pi)
    w = gaussian_seed(1, 1.0, R_var=12.0, n=6000)
    J = evaluate_J(w, P2)
    assert J.mass == pytest.approx(-0.5 * P2.gamma * 2 * math.sqrt(math.pi), rel=1e-5)
    assert J.gradient == pytest.approx(0.5 * math.sqrt(math.pi), rel=1e-5)
    # int v^3 K = int exp(-r^2/2) over the line
    assert J.absorption == pytest.approx(math.sqrt(2 * math.pi) / 3, rel=1e-5)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_gradient_matches_directional_derivative(seed):
    params = ProblemParams(1, 3.0, 0.5)
    w = random_admissible(1, 1, seed=seed, n=200)[0]
    rng = np.random.default_rng(seed)
    d = rng.normal(size=w.v.shape) * np.exp(-w.r ** 2 / 8)
    d[-1] = 0.0
    eps = 1e-6
    jp = evaluate_J(w.with_values(w.v + eps * d), params).total
    jm = evaluate_J(w.with_values(w.v - eps * d), params).total
    fd = (jp - jm) / (2 * eps)
    assert float(np.dot(gradient_J(w, params), d)) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_inadmissible_values():
    w = WeightedFunction.on_grid(lambda r: np.full_like(r, 1e200), 1)
    with pytest.raises(InadmissibleFunctionError):
        evaluate_J(w, ProblemParams(1, 3.0))


@pytest.mark.parametrize("r, v", [([0.0, 1.0], [1.0]), ([0.1, 1.0], [1.0, 0.0])])
def test_weighted_function_validation(r, v):
    with pytest.raises(InvalidParameterError):
        WeightedFunction(r, v, 1)


####################################################################
# cone projection and rearrangement


@pytest.mark.parametrize("seed", range(6))
def test_projection_matches_qp(seed):
    rng = np.random.default_rng(seed)
    r = np.linspace(0.0, 4.0, 30)
    y = rng.normal(size=30) + np.linspace(2, -1, 30)
    w = WeightedFunction(r, y, 2)
    vol = w.op.vol[:-1]
    x = cp.Variable(29)
    prob = cp.Problem(cp.Minimize(cp.sum(cp.multiply(vol, cp.square(x - y[:-1])))),
                      [x >= 0, x[1:] <= x[:-1]])
    prob.solve(solver=cp.CLARABEL)
    got = project_cone(w, y)
    assert got[-1] == 0.0 and np.all(got >= 0) and np.all(np.diff(got) <= 0)
    obj = float(np.sum(vol * (got[:-1] - y[:-1]) ** 2))
    assert obj <= prob.value * (1 + 1e-8)
    # for a projection on a convex set |x - P y|^2 <= f(x) - f(P y) at any feasible x
    xv = np.maximum.accumulate(np.maximum(x.value, 0)[::-1])[::-1]
    gap = float(np.sum(vol * (xv - y[:-1]) ** 2)) - obj
    assert float(np.sum(vol * (xv - got[:-1]) ** 2)) <= gap * (1 + 1e-6) + 1e-12
    assert gap < 1e-6 * obj


@pytest.mark.parametrize("params", [P2, ProblemParams(1, 3.0, 1.0), ProblemParams(2, 2.0, 0.5)])
def test_rearrangement_lowers_J(params):
    for w in random_admissible(params.N, 40, seed=3):
        out = decreasing_rearrangement(w, params)
        assert out.is_nonincreasing()
        assert np.all(out.v >= 0)
        assert evaluate_J(out, params).total <= evaluate_J(w, params).total + 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_rearrangement_idempotent(seed):
    w = random_admissible(1, 1, seed=seed, n=300)[0]
    once = decreasing_rearrangement(w, P2)
    twice = decreasing_rearrangement(once, P2)
    np.testing.assert_array_equal(once.v, twice.v)


def test_rearrangement_keeps_monotone_input():
    w = gaussian_seed(1, 2.0)
    np.testing.assert_array_equal(decreasing_rearrangement(w, P2).v, w.v)


def test_rearrangement_rejects_negative():
    w = WeightedFunction.on_grid(lambda r: np.cos(r), 1)
    with pytest.raises(InvalidParameterError):
        decreasing_rearrangement(w, P2)


def test_threshold_curve():
    params = ProblemParams(1, 3.0, 1.0)
    r = np.array([0.5, 1.0, 4.0])
    np.testing.assert_allclose(threshold_curve(r, params), np.sqrt(0.75 / r))


####################################################################
# weighted inequalities


def test_poincare_on_gaussian():
    # v = K^-1: int (4N+r^2)/16 v^2 K = 3N/8 M and int v'^2 K = N/2 M
    w = gaussian_seed(1, 1.0, R_var=12.0, n=6000)
    sharp = weighted_poincare_check(w, "sharp")
    stated = weighted_poincare_check(w, "stated")
    assert sharp.holds and sharp.lhs / sharp.rhs == pytest.approx(0.75, rel=1e-4)
    assert not stated.holds and stated.lhs / stated.rhs == pytest.approx(2.0, rel=1e-4)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_poincare_sharp_holds_on_corpus(N):
    assert all(weighted_poincare_check(w).holds for w in random_admissible(N, 100, seed=N))


def test_poincare_rejects_unknown_form():
    with pytest.raises(InvalidParameterError):
        weighted_poincare_check(gaussian_seed(1), "loose")


@pytest.mark.parametrize("R", [1.0, 2.0, 4.0])
def test_est2_constant_closed_form(R):
    # N=1, beta=0: int_{-R}^{R} exp(r^2/4) dr = 2 sqrt(pi) erfi(R/2)
    ref = (2 * math.sqrt(math.pi) * special.erfi(R / 2)) ** (1 / 3)
    assert est2_constant(P2, R) == pytest.approx(ref, rel=1e-10)


def test_est2_constant_rejects_large_beta():
    with pytest.raises(InvalidParameterError):
        est2_constant(ProblemParams(1, 2.0, 0.5), 2.0)


@pytest.mark.parametrize("params", [P2, ProblemParams(1, 2.0, 0.3)])
def test_est2_holds_on_corpus(params):
    rep = est2_constant_check(params, 4.0)
    assert rep.eps == 0.25 and rep.n_samples == 100
    assert rep.verified, rep


def test_est2_needs_sharp_eps_in_two_dimensions():
    params = ProblemParams(2, 3.0, 1.0)
    assert not est2_constant_check(params, 4.0).verified
    assert est2_constant_check(params, 4.0, eps=16 / 4.0 ** 2).verified


@pytest.mark.parametrize("N", [1, 2, 3])
def test_hermite_ground_state(N):
    assert hermite_lowest_eigenvalue(N, n=2000) == pytest.approx(N / 2, rel=1e-5)


####################################################################
# minimisation


@pytest.fixture(scope="module")
def minimum():
    return minimize_J(P2)


def test_minimizer_is_the_profile(minimum, vss_p2):
    _, res = vss_p2
    assert minimum.status == MINIMIZER and minimum.converged
    assert minimum.J.total < 0
    assert compare_with_profile(minimum.minimizer, res.profile) < 1e-4
    assert minimum.el_residual < 1e-3


def test_minimizer_independent_of_seed(minimum):
    other = minimize_J(P2, gaussian_seed(1, 3.0, n=800))
    assert other.J.total == pytest.approx(minimum.J.total, rel=1e-8)
    np.testing.assert_allclose(other.minimizer.v, minimum.minimizer.v, atol=1e-5)


def test_minimizer_history_nonincreasing(minimum):
    h = np.asarray(minimum.history)
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[:-1]))


def test_minimize_rejects_zero_seed():
    with pytest.raises(InvalidParameterError):
        minimize_J(P2, WeightedFunction.on_grid(np.zeros_like, 1))
