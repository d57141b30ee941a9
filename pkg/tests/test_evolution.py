import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, special

from vsslab.evolution import (GridError, RadialGrid, SpaceTimeField, StepLog, cutoff,
                              energy_functionals, envelope_constant, evolve, k_sequence_limit,
                              localized_energy_psi, longtime_profile, make_dirac_approx,
                              razor_lower_bound, scaling_transform_check, transformed_mass)
from vsslab.model import (DomainError, FlatPotential, InvalidParameterError, OmegaSpec,
                          PowerPotential, ProblemParams)

# exp(-1e4/r^2) < 1e-100 on r < 4.3: absorption switched off for all practical purposes
NO_ABSORPTION = FlatPotential(OmegaSpec.constant(1e4))


@pytest.fixture(scope="module")
def grid1():
    return RadialGrid.graded(1, 6.0, h0=1e-3, h_max=0.01)


def _smoothed_heat_kernel(x, t, rho):
    # 1-D heat kernel convolved with the uniform density on [-rho, rho]
    a = math.sqrt(4 * t)
    return (special.erf((x + rho) / a) - special.erf((x - rho) / a)) / (4 * rho)


@pytest.mark.parametrize("scheme", ["split", "implicit"])
def test_heat_kernel_without_absorption(grid1, scheme):
    rho = 0.05
    u0 = make_dirac_approx(1.0, rho, "tophat", grid1)
    fld = evolve(ProblemParams(1, 2.0), NO_ABSORPTION, u0, grid1, 0.25, rel_change=0.002,
                 scheme=scheme)
    ref = _smoothed_heat_kernel(grid1.r, 0.25, rho)
    err = np.max(np.abs(fld.at(0.25) - ref)) / np.max(ref)
    assert err < 2e-3
    assert fld.meta["mass"] == pytest.approx(1.0, rel=1e-12)


def test_heat_kernel_time_error_first_order(grid1):
    u0 = make_dirac_approx(1.0, 0.05, "tophat", grid1)
    ref = _smoothed_heat_kernel(grid1.r, 0.25, 0.05)
    errs = []
    for rc in (0.004, 0.002):
        fld = evolve(ProblemParams(1, 2.0), NO_ABSORPTION, u0, grid1, 0.25, rel_change=rc)
        errs.append(np.max(np.abs(fld.at(0.25) - ref)))
    assert 1.5 < errs[0] / errs[1] < 2.5


@pytest.mark.filterwarnings("ignore:solution reaches the outer boundary")
@pytest.mark.parametrize("p, beta", [(2.0, 0.0), (3.0, 0.0)])
def test_spatially_constant_data_follows_absorption_ode(p, beta):
    grid = RadialGrid.graded(1, 20.0, h0=1e-2, h_max=0.1)
    u0 = np.full(len(grid.r), 2.0)
    fld = evolve(ProblemParams(1, p, beta), PowerPotential(beta), u0, grid, 0.5, rel_change=0.01)
    exact = (2.0 ** (1 - p) + (p - 1) * 0.5) ** (-1 / (p - 1))
    assert fld.at(0.5)[0] == pytest.approx(exact, rel=1e-8)


@pytest.mark.filterwarnings("ignore:solution reaches the outer boundary")
def test_implicit_scheme_converges_on_absorption_ode():
    grid = RadialGrid.graded(1, 20.0, h0=1e-2, h_max=0.1)
    u0 = np.full(len(grid.r), 2.0)
    exact = 1 / (0.5 + 0.5)
    errs = [abs(evolve(ProblemParams(1, 2.0), PowerPotential(0.0), u0, grid, 0.5,
                       rel_change=rc, scheme="implicit").at(0.5)[0] - exact)
            for rc in (0.02, 0.01)]
    assert 1.5 < errs[0] / errs[1] < 2.5


####################################################################
# approximate point masses


def test_tophat_value_and_mass(grid1):
    u = make_dirac_approx(1.0, 0.1, "tophat", grid1)
    assert u[0] == pytest.approx(5.0, rel=1e-12)
    assert grid1.integrate(u) == pytest.approx(1.0, rel=1e-13)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_bump_mass(N):
    grid = RadialGrid.graded(N, 2.0, h0=1e-3, h_max=0.01)
    u = make_dirac_approx(3.0, 0.2, "bump", grid)
    assert grid.integrate(u) == pytest.approx(3.0, rel=1e-12)
    assert np.all(u[grid.r > 0.21] == 0)
    # profile shape: proportional to (1 - (r/rho)^2)^2 at interior nodes
    i = np.searchsorted(grid.r, 0.1)
    assert u[i] / u[0] == pytest.approx(0.75 ** 2, rel=0.05)


@settings(max_examples=20, deadline=None)
@given(m=st.floats(0.1, 1e6), scale=st.floats(0.1, 100.0))
def test_dirac_linear_in_mass(grid1, m, scale):
    a = make_dirac_approx(m, 0.2, "tophat", grid1)
    b = make_dirac_approx(m * scale, 0.2, "tophat", grid1)
    np.testing.assert_allclose(b, scale * a, rtol=1e-12)


def test_dirac_rejects_unresolved_support(grid1):
    with pytest.raises(GridError):
        make_dirac_approx(1.0, 1e-4, "tophat", grid1)
    with pytest.raises(InvalidParameterError):
        make_dirac_approx(1.0, 0.1, "cone", grid1)
    with pytest.raises(InvalidParameterError):
        make_dirac_approx(-1.0, 0.1, "tophat", grid1)


def test_evolve_rejects_bad_input(grid1):
    u0 = make_dirac_approx(1.0, 0.1, "tophat", grid1)
    params = ProblemParams(1, 2.0)
    with pytest.raises(InvalidParameterError):
        evolve(params, PowerPotential(0.0), u0, grid1, 0.0)
    with pytest.raises(InvalidParameterError):
        evolve(params, PowerPotential(0.0), -u0, grid1, 0.1)
    with pytest.raises(InvalidParameterError):
        evolve(params, PowerPotential(0.0), u0, grid1, 0.1, scheme="crank")


def test_boundary_warning():
    grid = RadialGrid.graded(1, 1.0, h0=1e-3, h_max=0.01)
    u0 = make_dirac_approx(1.0, 0.1, "tophat", grid)
    with pytest.warns(RuntimeWarning, match="outer boundary"):
        evolve(ProblemParams(1, 2.0), NO_ABSORPTION, u0, grid, 0.5)


####################################################################
# structural properties


@pytest.fixture(scope="module")
def flat_run():
    grid = RadialGrid.graded(1, 8.0, h0=1e-3, h_max=0.01)
    params = ProblemParams(1, 2.0)
    h = FlatPotential(OmegaSpec.power_law(1.0))
    u0 = make_dirac_approx(50.0, 0.05, "tophat", grid)
    return evolve(params, h, u0, grid, 0.5, t_out=[0.05, 0.1, 0.25], rel_change=0.02)


@pytest.mark.parametrize("scheme", ["split", "implicit"])
def test_positivity_and_comparison(grid1, scheme):
    params = ProblemParams(1, 3.0, 1.0)
    h = PowerPotential(1.0)
    small = make_dirac_approx(10.0, 0.1, "tophat", grid1)
    large = make_dirac_approx(20.0, 0.1, "tophat", grid1)
    a = evolve(params, h, small, grid1, 0.3, t_out=[0.1], rel_change=0.02, scheme=scheme)
    b = evolve(params, h, large, grid1, 0.3, t_out=[0.1], rel_change=0.02, scheme=scheme)
    assert np.all(a.values >= 0)
    # both runs take different steps, so allow the time-discretization gap
    assert np.all(a.values <= b.values + 1e-3 * np.max(b.values, axis=1, keepdims=True))
    assert np.all(b.at(0.3) <= 2 * a.at(0.3) + 1e-12)


def test_mass_balance(flat_run):
    assert np.max(np.abs(flat_run.steps.balance)) < 1e-6
    assert np.all(np.diff(flat_run.steps.mass) <= 1e-12 * flat_run.steps.mass[0])


def test_energies_partition_and_dissipate(flat_run):
    s = [0.0, 0.05, 0.2, 1.0]
    t = [0.0, 0.1, 0.25, 0.5]
    rec = energy_functionals(flat_run, s, t)
    np.testing.assert_allclose(rec.J + rec.E, np.broadcast_to(rec.total, rec.J.shape), rtol=1e-12)
    assert np.all(np.diff(rec.J, axis=0) <= 1e-12 * rec.total)
    assert np.all(np.diff(rec.I, axis=0) <= 1e-12 * rec.total[0])
    # backward Euler loses L2 energy at least as fast as the continuous identity
    assert np.all(rec.total + 2 * rec.I[0] <= rec.total[0] * (1 + 1e-10))
    assert np.all(rec.total[1:] + 2 * rec.I[0, 1:] >= 0.9 * rec.total[0])


def test_energy_rejects_missing_snapshot(flat_run):
    with pytest.raises(DomainError):
        energy_functionals(flat_run, [0.1], [0.3])
    with pytest.raises(DomainError):
        energy_functionals(flat_run, [20.0], [0.1])


def test_scaling_check_identity(flat_run):
    assert scaling_transform_check(flat_run.params, flat_run, flat_run, 1.0, 0.25, (0, 2)) == 0.0


def test_transformed_mass():
    assert transformed_mass(ProblemParams(1, 2.0), 64.0, 4.0) == pytest.approx(128.0)
    assert transformed_mass(ProblemParams(3, 2.0, 1.0), 1.0, 4.0) == 1.0


def test_longtime_profile_detects_decay(flat_run):
    rep = longtime_profile(flat_run, [0.0, 0.5])
    assert rep.decaying and rep.monotone_violation > 0.1


def test_longtime_profile_growing_field():
    grid = RadialGrid(np.linspace(0, 2, 21), 1)
    times = np.array([0.0, 1.0, 2.0, 3.0])
    vals = np.array([(1 - np.exp(-t)) * (2 - grid.r) for t in times])
    fld = SpaceTimeField(grid, times, vals, np.zeros((4, 20)), np.zeros((4, 21)),
                         ProblemParams(1, 2.0), StepLog())
    rep = longtime_profile(fld)
    assert rep.monotone_violation == 0.0 and not rep.decaying


####################################################################
# localized energy and envelopes


def test_cutoff_shape():
    r = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    np.testing.assert_allclose(cutoff(r, 1.0), [1, 1, 1, 0.5, 0, 0], atol=1e-15)
    x = np.linspace(1, 2, 2001)
    assert np.max(np.abs(np.gradient(cutoff(x, 1.0), x))) <= math.pi / 2 * (1 + 1e-6)


def test_psi_series(flat_run):
    ps = localized_energy_psi(flat_run, 0.5, lambda1=math.pi ** 2 / 4)
    assert np.all(ps.psi >= 0) and ps.c_bar >= 0
    assert ps.d0 == pytest.approx(math.pi ** 2 / 8)
    with pytest.raises(DomainError):
        localized_energy_psi(flat_run, 5.0, lambda1=1.0)


def test_envelope_constant_synthetic():
    grid = RadialGrid(np.linspace(0, 3, 31), 1)
    params = ProblemParams(1, 2.0, 1.0)
    times = np.array([0.0, 0.5, 1.0])
    vals = np.array([np.zeros(31)] + [2.5 * (grid.r ** 2 + t) ** -params.gamma for t in times[1:]])
    fld = SpaceTimeField(grid, times, vals, np.zeros((3, 30)), np.zeros((3, 31)), params, StepLog())
    assert envelope_constant(params, fld) == pytest.approx(2.5, rel=1e-14)


@pytest.mark.parametrize("omega0, t", [(0.5, 0.5), (1.0, 0.8), (0.2, 1.0)])
def test_razor_lower_bound_maximiser(omega0, t):
    lam1 = math.pi ** 2 / 4
    logb, eps = razor_lower_bound(omega0, 2.0, t, lam1)

    def neg(e):
        return -(-2 * math.log(e) + omega0 / e ** 2 - lam1 * t / e ** 2)

    opt = optimize.minimize_scalar(neg, bounds=(1e-3, 50), method="bounded",
                                   options={"xatol": 1e-12})
    assert logb == pytest.approx(-opt.fun, rel=1e-8)
    assert eps == pytest.approx(opt.x, rel=1e-4)


def test_razor_lower_bound_infinite_at_small_times():
    assert razor_lower_bound(1.0, 2.0, 0.1, math.pi ** 2 / 4)[0] == math.inf


def test_dichotomy_needs_five_levels(grid1):
    with pytest.raises(InvalidParameterError):
        k_sequence_limit(ProblemParams(1, 2.0), PowerPotential(0.0), [1, 2], [0.1, 0.1],
                         grid1, 1.0, 0.5)
