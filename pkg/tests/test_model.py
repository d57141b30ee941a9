import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from vsslab.model import (INDETERMINATE, RAZOR_BLADE, VSS, DivergenceError, DomainError,
                          FlatPotential, InvalidParameterError, OmegaSpec, PowerPotential,
                          ProblemParams, TabulatedPotential, classify_potential, critical_beta,
                          dini_integral, dyadic_shell_integral, energy_majorant_g,
                          flat_g_sandwich, flat_g_two_sided, gamma_exponent,
                          log_energy_majorant_g, make_potential, phi, phi_and_inverse,
                          phi_inverse, potential_eval, sphere_area)


@pytest.mark.parametrize("p, beta, expected", [(2, 0, 1.0), (3, 2, 1.0), (2, 1, 1.5), (5, 0, 0.25)])
def test_gamma_exponent(p, beta, expected):
    assert gamma_exponent(p, beta) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("N, p, expected", [(1, 3, 0.0), (2, 2, 0.0), (3, 2, 1.0), (1, 2, -1.0)])
def test_critical_beta(N, p, expected):
    assert critical_beta(N, p) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("N, p", [(0, 2.0), (1.5, 2.0), (1, 1.0), (2, 0.5)])
def test_params_reject_bad_input(N, p):
    with pytest.raises(InvalidParameterError):
        ProblemParams(N, p)


def test_params_supercritical_flag():
    assert ProblemParams(1, 3.0, 0.5).supercritical
    assert not ProblemParams(1, 3.0, 0.0).supercritical


@pytest.mark.parametrize("N, expected", [(1, 2.0), (2, 2 * math.pi), (3, 4 * math.pi)])
def test_sphere_area(N, expected):
    assert sphere_area(N) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("h, r, expected", [
    (PowerPotential(2.0), 3.0, 9.0),
    (FlatPotential(OmegaSpec.constant(1.0)), 1.0, math.exp(-1.0)),
    (FlatPotential(OmegaSpec.power_law(1.0)), 0.5, math.exp(-2.0)),
])
def test_potential_eval(h, r, expected):
    assert potential_eval(h, r) == pytest.approx(expected, rel=1e-14)


def test_potential_eval_rejects_nonpositive_radius():
    with pytest.raises(DomainError):
        potential_eval(PowerPotential(1.0), 0.0)


@given(beta=st.floats(-1.5, 4.0), lam=st.floats(0.01, 100.0), r=st.floats(1e-3, 10.0))
def test_power_potential_homogeneous(beta, lam, r):
    h = PowerPotential(beta)
    assert potential_eval(h, lam * r) == pytest.approx(lam ** beta * potential_eval(h, r), rel=1e-12)


def test_flat_potential_limit_at_origin():
    h = FlatPotential(OmegaSpec.constant(1.0))
    assert h.values(np.array([0.0]))[0] == 0.0


def test_tabulated_potential_loglog_exact_on_power_segments():
    r = np.geomspace(0.01, 10, 7)
    h = TabulatedPotential(tuple(r), tuple(r ** 1.7))
    x = np.geomspace(0.011, 9.9, 50)
    np.testing.assert_allclose(h.values(x), x ** 1.7, rtol=1e-12)
    with pytest.raises(DomainError):
        h.values(20.0)


@pytest.mark.parametrize("radii, heights", [((1.0,), (1.0,)), ((1.0, 0.5), (1.0, 1.0)),
                                            ((0.5, 1.0), (1.0, -1.0))])
def test_tabulated_potential_validation(radii, heights):
    with pytest.raises(InvalidParameterError):
        TabulatedPotential(radii, heights)


def test_make_potential_kinds(tmp_path):
    assert isinstance(make_potential("power", beta=1), PowerPotential)
    assert make_potential("flat", alpha0=0.5).omega.alpha0 == 0.5
    assert make_potential("flat-constant", omega0=2).omega.omega0 == 2.0
    path = tmp_path / "h.csv"
    np.savetxt(path, np.column_stack(([0.1, 1.0], [0.2, 0.3])), delimiter=",")
    assert isinstance(make_potential("tabulated", table_path=path), TabulatedPotential)
    with pytest.raises(InvalidParameterError):
        make_potential("cosine")


def test_omega_power_law_matches_closed_form():
    w = OmegaSpec.power_law(0.5)
    s = np.geomspace(1e-4, 1, 9)
    np.testing.assert_allclose(w(s), s ** 1.5)
    np.testing.assert_allclose(w.log_derivative(s), 1.5)


def test_omega_custom_requires_monotone():
    with pytest.raises(InvalidParameterError):
        OmegaSpec.custom(lambda s: 1 - s)


####################################################################
# Phi


@pytest.mark.parametrize("alpha0, s", [(1.0, 0.25), (0.5, 0.5), (1.5, 0.3)])
def test_phi_matches_closed_form(alpha0, s):
    # independent oracle: direct adaptive quadrature of omega(s)/s
    w = OmegaSpec.power_law(alpha0)
    oracle, _ = integrate.quad(lambda x: x ** (1 - alpha0), 0, s, epsabs=0, epsrel=1e-13)
    closed = s ** (2 - alpha0) / (2 - alpha0)
    assert oracle == pytest.approx(closed, rel=1e-12)
    assert phi(w, s) == pytest.approx(closed, rel=1e-9)


def test_phi_frozen_value():
    assert phi(OmegaSpec.power_law(0.5), 0.5) == pytest.approx(0.2357022603955158, rel=1e-9)


def test_phi_vanishes_at_zero():
    w = OmegaSpec.power_law(1.0)
    assert phi(w, 1e-10) < 1e-9


@pytest.mark.parametrize("alpha0", [0.3, 1.0, 1.9])
@pytest.mark.parametrize("s", [1e-4, 3e-3, 0.1, 1.0])
def test_phi_round_trip(alpha0, s):
    val, back = phi_and_inverse(OmegaSpec.power_law(alpha0), s)
    assert abs(back - s) <= 1e-8 * s


def test_phi_constant_diverges():
    with pytest.raises(DivergenceError):
        phi(OmegaSpec.constant(1.0), 0.5)


def test_phi_inverse_rejects_nonpositive():
    with pytest.raises(DomainError):
        phi_inverse(OmegaSpec.power_law(1.0), 0.0)


def test_dyadic_shells_geometric_and_harmonic():
    conv = dyadic_shell_integral(lambda s: s ** -0.5, 1.0)
    assert conv.converged and conv.value == pytest.approx(2.0, rel=1e-9)
    div = dyadic_shell_integral(lambda s: 1 / s, 1.0)
    assert not div.converged


def test_dini_integral_power_law():
    res = dini_integral(OmegaSpec.power_law(1.0))
    assert res.converged and res.value == pytest.approx(1.0, rel=1e-9)


####################################################################
# classification


def test_classify_flat_power_law_is_vss():
    assert classify_potential(FlatPotential(OmegaSpec.power_law(1.0))).verdict == VSS


def test_classify_flat_constant_is_razor_blade():
    assert classify_potential(FlatPotential(OmegaSpec.constant(1.0))).verdict == RAZOR_BLADE


def test_classify_log_modulus_is_indeterminate():
    # oracle: int_0^0.3 ds/(s ln(1/s)) diverges (antiderivative -ln ln(1/s))
    w = OmegaSpec.custom(lambda s: 1 / np.log(1 / np.asarray(s)), s_max=0.3)
    part = [integrate.quad(lambda s: 1 / (s * math.log(1 / s)), 10.0 ** -(k + 1), 10.0 ** -k)[0]
            for k in range(1, 6)]
    assert all(x > 0.05 for x in part)
    assert classify_potential(FlatPotential(w)).verdict == INDETERMINATE


@pytest.mark.parametrize("beta, verdict", [(0.5, VSS), (0.0, INDETERMINATE), (-0.5, INDETERMINATE)])
def test_classify_power_against_critical_line(beta, verdict):
    assert classify_potential(PowerPotential(beta), ProblemParams(1, 3.0, beta)).verdict == verdict


@pytest.mark.parametrize("small, large", [
    (OmegaSpec.power_law(1.0), OmegaSpec.power_law(1.5)),
    (OmegaSpec.power_law(1.0), OmegaSpec.constant(1.0)),
    (OmegaSpec.power_law(0.5), OmegaSpec.constant(2.0)),
])
def test_classification_monotone_in_omega(small, large):
    order = {VSS: 0, INDETERMINATE: 1, RAZOR_BLADE: 1}
    s = np.geomspace(1e-6, 0.9, 50)
    assert np.all(large(s) >= small(s))
    a = classify_potential(FlatPotential(small)).verdict
    b = classify_potential(FlatPotential(large)).verdict
    assert order[b] >= order[a]


####################################################################
# energy majorant


@pytest.mark.parametrize("beta", [0.0, 0.5, 2.0])
@pytest.mark.parametrize("s", [0.05, 0.3, 1.0, 4.0])
def test_majorant_power_closed_form(beta, s):
    params = ProblemParams(1, 2.0, beta)
    e = 2 * beta / 5
    closed = ((e + 1) / s ** (e + 1)) ** 5
    assert energy_majorant_g(PowerPotential(beta), s, params) == pytest.approx(closed, rel=1e-8)


def test_majorant_beta_zero_is_s_to_minus_five():
    params = ProblemParams(1, 2.0)
    for s in (0.1, 0.7, 2.0):
        assert energy_majorant_g(PowerPotential(0.0), s, params) == pytest.approx(s ** -5, rel=1e-9)


@pytest.mark.parametrize("lam", [0.5, 2.0, 10.0])
def test_majorant_power_scaling(lam):
    params = ProblemParams(1, 2.0, 1.0)
    h = PowerPotential(1.0)
    e = 2 / 5
    ratio = energy_majorant_g(h, lam * 0.3, params) / energy_majorant_g(h, 0.3, params)
    assert ratio == pytest.approx(lam ** (-5 * (e + 1)), rel=1e-8)


def test_majorant_decreasing_flat():
    params = ProblemParams(1, 2.0)
    h = FlatPotential(OmegaSpec.power_law(1.0))
    logs = [log_energy_majorant_g(h, s, params) for s in np.geomspace(0.01, 1, 12)]
    assert np.all(np.diff(logs) < 0)


def test_majorant_non_integrable_raises():
    with pytest.raises(DivergenceError):
        log_energy_majorant_g(PowerPotential(-3.0), 0.5, ProblemParams(1, 2.0, -3.0))


def test_sandwich_lower_bound_holds_and_upper_only_very_close_to_origin():
    params = ProblemParams(1, 2.0)
    h = FlatPotential(OmegaSpec.power_law(1.0))
    for s in (0.01, 0.02, 0.05, 0.1, 0.2):
        lo, hi = flat_g_sandwich(h.omega, s, 2.0, 0.5)
        lg = log_energy_majorant_g(h, s, params)
        assert lo <= lg
        assert (lg <= hi) == (s <= 0.02)


@pytest.mark.parametrize("s", [0.02, 0.05, 0.1, 0.2])
def test_power_corrected_bounds_bracket(s):
    params = ProblemParams(1, 2.0)
    h = FlatPotential(OmegaSpec.power_law(1.0))
    lo, hi = flat_g_two_sided(h.omega, s, params, 1.0)
    assert lo <= log_energy_majorant_g(h, s, params) <= hi


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0.01, 1.0))
def test_majorant_log_consistent(s):
    params = ProblemParams(1, 2.0, 0.5)
    h = PowerPotential(0.5)
    assert math.exp(log_energy_majorant_g(h, s, params)) == pytest.approx(
        energy_majorant_g(h, s, params), rel=1e-12)
