import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thermofield import model
from thermofield.model import AtomSpec, CouplingTerm, FormFactor, ModelSpec, spin_boson

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
FLAT0 = FormFactor(p=0.0, cutoff=math.inf)  # g == 1


# -- glued map -----------------------------------------------------------------

def test_tau_beta_hand_values():
    assert model.tau_beta(FLAT0, 1.0, 0.0, math.log(2)) == pytest.approx(math.sqrt(2) * math.log(2), rel=1e-12)
    assert model.tau_beta(FLAT0, 1.0, 0.0, -math.log(2)) == pytest.approx(math.log(2), rel=1e-12)
    assert abs(model.tau_beta(FLAT0, 1.0, 0.0, -math.log(2)).imag) < 1e-15


def test_tau_beta_rejects_zero():
    with pytest.raises(ValueError):
        model.tau_beta(FLAT0, 1.0, 0.0, 0.0)


def test_tau_beta_infrared_plateau():
    ff = FormFactor(p=-0.5, cutoff=math.inf)
    for beta in (0.5, 2.0, 7.0):
        assert abs(model.tau_beta(ff, beta, 0.0, 1e-9)) == pytest.approx(beta ** -0.5, rel=1e-6)


@pytest.mark.parametrize("u", [0.3, 1.0, 2.5, 6.0])
@pytest.mark.parametrize("beta", [0.5, 1.0, 4.0])
def test_detailed_balance_of_glued_weight(u, beta):
    ff = FormFactor(p=0.5, cutoff=1.5)
    phi = model.glue_phase_for(0.5, 0.0)
    lhs = abs(model.tau_beta(ff, beta, phi, -u))
    rhs = math.exp(-beta * u / 2) * abs(model.tau_beta(ff, beta, phi, u))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def _fd(f, u, h, order):
    if order == 1:
        return (f(u + h) - f(u - h)) / (2 * h)
    if order == 2:
        return (f(u + h) - 2 * f(u) + f(u - h)) / h**2
    return (f(u + 2 * h) - 2 * f(u + h) + 2 * f(u - h) - f(u - 2 * h)) / (2 * h**3)


@pytest.mark.parametrize("ff,beta,u", [
    (FLAT0, 1.0, math.log(2)),
    (FormFactor(p=0.5), 10.0, 0.1),
    (FormFactor(p=0.5), 1.0, -0.7),
    (FormFactor(p=-0.5, cutoff=2.0), 3.0, 0.4),
    (FormFactor(p=1.5, phase0=0.3), 0.7, -1.2),
])
def test_first_derivative_matches_finite_difference(ff, beta, u):
    phi = model.glue_phase_for(ff.p, ff.phase0)
    f = lambda x: model.tau_beta(ff, beta, phi, x)
    exact = model.d_tau_beta(ff, beta, phi, u, 1)
    assert abs(exact - _fd(f, u, 1e-5, 1)) <= 1e-6 * max(1.0, abs(exact))


@pytest.mark.parametrize("order,h,tol", [(2, 1e-4, 1e-5), (3, 1e-3, 1e-4)])
def test_higher_derivatives_match_finite_difference(order, h, tol):
    ff = FormFactor(p=0.5, cutoff=1.3)
    phi = model.glue_phase_for(0.5, 0.0)
    for u in (-1.1, -0.3, 0.45, 1.7):
        f = lambda x: model.tau_beta(ff, 2.0, phi, x)
        exact = model.d_tau_beta(ff, 2.0, phi, u, order)
        assert abs(exact - _fd(f, u, h, order)) <= tol * max(1.0, abs(exact))


@given(st.floats(0.05, 5.0), st.floats(0.1, 20.0), st.sampled_from([-1, 1]))
def test_derivative_oracle_property(u, beta, sign):
    ff = FormFactor(p=0.5, cutoff=1.0)
    phi = model.glue_phase_for(0.5, 0.0)
    u = sign * u
    h = 1e-5
    f = lambda x: model.tau_beta(ff, beta, phi, x)
    exact = model.d_tau_beta(ff, beta, phi, u, 1)
    assert abs(exact - _fd(f, u, h, 1)) <= 1e-6 * max(1.0, abs(exact))


def test_thermal_weight_series_and_recursion_agree():
    # the two branches of the derivative evaluation meet at beta*u = 0.2
    beta = 1.0
    d_lo = model.thermal_weight_derivs(np.array([0.2 - 1e-9]), beta, 3)[:, 0]
    d_hi = model.thermal_weight_derivs(np.array([0.2 + 1e-9]), beta, 3)[:, 0]
    np.testing.assert_allclose(d_lo, d_hi, rtol=1e-7)


def test_thermal_weight_large_beta_no_nan():
    d = model.thermal_weight_derivs(np.array([-50.0, -5.0, 5.0]), 1e3, 3)
    assert np.all(np.isfinite(d))


def test_d_tau_beta_order_checked():
    with pytest.raises(ValueError):
        model.d_tau_beta(FLAT0, 1.0, 0.0, 1.0, 4)


def test_vanishing_form_factor_has_zero_derivatives():
    ff = FormFactor(p=0.5, amplitude=0.0)
    for j in (1, 2, 3):
        assert model.d_tau_beta(ff, 1.0, math.pi, 0.7, j) == 0


@pytest.mark.parametrize("p", [-0.5, 0.5, 1.5])
def test_glue_phase_makes_derivatives_continuous(p):
    ff = FormFactor(p=p, cutoff=1.0, phase0=0.4)
    phi = model.glue_phase_for(p, 0.4)
    h = 1e-8
    d = model.glued_derivs(ff, 1.0, phi, np.array([-h, h]), 2)
    assert np.max(np.abs(d[:, 1] - d[:, 0])) < 1e-4 * max(1.0, np.max(np.abs(d)))


def test_glue_phase_rule():
    assert model.glue_phase_for(-0.5, 0.2) == pytest.approx(0.4)
    assert model.glue_phase_for(0.5, 0.2) == pytest.approx(math.pi + 0.4)
    assert spin_boson(p=0.5).glue_phase == pytest.approx(math.pi)
    assert spin_boson(p=0.5).replace(glue_phase_override=0.0).glue_phase == 0.0


# -- validation ----------------------------------------------------------------

def test_validate_reference_passes():
    rep = model.validate_a1(spin_boson(beta=1.0, p=0.5, cutoff=1.0))
    assert rep.passed, [c for c in rep.checks if not c.passed]
    names = {c.name for c in rep.checks}
    assert "alpha=0: ||d^3 tau(g)||_L2 finite" in names


def test_validate_flags_nonzero_slope_at_origin():
    rep = model.validate_a1(spin_boson(p=-0.5, center=0.5))
    failed = [c.name for c in rep.checks if not c.passed]
    assert "alpha=0: d gt(0) = 0" in failed


def test_validate_zero_profile_passes_with_zero_norms():
    rep = model.validate_a1(spin_boson(p=0.5, amplitude=0.0))
    assert rep.passed
    assert all(c.value == 0.0 for c in rep.checks if "||" in c.name)


def test_unsupported_profile():
    with pytest.raises(model.UnsupportedFeatureError):
        FormFactor(profile="lorentzian")


def test_coupling_must_be_hermitian():
    with pytest.raises(ValueError):
        CouplingTerm(np.array([[0, 1], [0, 0]]), FormFactor())


# -- golden rule, c(p, beta) ---------------------------------------------------

def test_fgr_hand_value():
    # g(u) = e^{-u^2}: p = 0, unit cutoff
    spec = spin_boson(p=0.0, cutoff=1.0)
    assert model.fgr_value(spec) == pytest.approx(4 * math.pi * math.exp(-2), rel=1e-12)
    assert model.fgr_value(spec) == pytest.approx(1.700673, abs=1e-6)


def test_fgr_diagonal_coupling_fails_a2():
    assert model.fgr_value(spin_boson(G=np.eye(2))) == 0.0


def test_fgr_cancelling_terms():
    ff = FormFactor(p=0.5)
    spec = ModelSpec(AtomSpec((0.0, 1.0)), (CouplingTerm(SX, ff), CouplingTerm(-SX, ff)), 1.0)
    assert model.fgr_value(spec) == pytest.approx(0.0, abs=1e-15)


@given(st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_fgr_gauge_invariance(a, b):
    spec = spin_boson(p=0.5, G=np.array([[0.3, 1.0 - 0.5j], [1.0 + 0.5j, -0.2]]))
    U = np.diag(np.exp(1j * np.array([a, b])))
    G = spec.couplings[0].G
    spec2 = spec.replace(couplings=(CouplingTerm(U @ G @ U.conj().T, spec.couplings[0].ff),))
    assert model.fgr_value(spec2) == pytest.approx(model.fgr_value(spec), rel=1e-12)


def test_c_p_beta_lambda_independent_and_linear():
    spec = spin_boson(beta=2.0, lam=0.0, p=0.5)
    c = model.c_p_beta(spec)
    assert model.c_p_beta(spec.replace(lam=0.3)) == c
    spec3 = spin_boson(beta=2.0, p=0.5, G=3 * SX)
    assert model.c_p_beta(spec3) == pytest.approx(3 * c, rel=1e-10)


def test_c_p_beta_frozen_value():
    # regression value of the quadrature, reference model
    assert model.c_p_beta(spin_boson(beta=1.0, p=0.5, cutoff=1.0)) == pytest.approx(
        7.014062011124167, rel=1e-8)


# -- Gibbs data ------------------------------------------------------------------

def test_gibbs_density_values():
    atom = AtomSpec((0.0, 1.0))
    np.testing.assert_allclose(model.gibbs_density(atom, math.log(3)), np.diag([0.75, 0.25]), rtol=1e-14)
    np.testing.assert_allclose(model.gibbs_density(AtomSpec((0, 1, 2.5)), 1e-12), np.eye(3) / 3, atol=1e-11)
    np.testing.assert_allclose(model.gibbs_density(atom, 1e3), np.diag([1.0, 0.0]), atol=1e-12)


def test_gibbs_vector_values():
    atom = AtomSpec((0.0, 1.0))
    v = model.gibbs_vector(atom, 2 * math.log(2))
    np.testing.assert_allclose(v, [2 / math.sqrt(5), 0, 0, 1 / math.sqrt(5)], rtol=1e-14)
    np.testing.assert_allclose(model.gibbs_vector(atom, 800.0), [1, 0, 0, 0], atol=1e-14)


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=5, unique=True), st.floats(0.01, 20))
def test_gibbs_purification(energies, beta):
    E = sorted(energies)
    if min(np.diff(E)) < 1e-6:
        return
    atom = AtomSpec(tuple(E))
    d = atom.dim
    v = model.gibbs_vector(atom, beta)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-13)
    psi = v.reshape(d, d)
    rho = psi @ psi.conj().T
    np.testing.assert_allclose(rho, model.gibbs_density(atom, beta), atol=1e-13)
    s = np.linalg.svd(psi, compute_uv=False)
    np.testing.assert_allclose(np.sort(s**2), np.sort(np.diag(model.gibbs_density(atom, beta))), atol=1e-13)
