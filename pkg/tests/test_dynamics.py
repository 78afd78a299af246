import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from thermofield import dynamics as D
from thermofield import fock, kms, spectral
from thermofield import liouvillian as lv
from thermofield.model import spin_boson


@pytest.fixture(scope="module")
def bundle():
    return lv.build(spin_boson(beta=2.0, lam=0.1, p=0.5), fock.resonant_grid(1.0, 8), 2)


def _excited(b):
    return np.kron(np.kron([0, 1.0], [0, 1.0]), fock.vacuum(b.basis)).astype(complex)


def _population(b):
    return lv.atom_operator(b.spec, b.basis, np.diag([0.0, 1.0]))


def test_zero_time_is_identity(bundle):
    v = np.random.default_rng(0).normal(size=bundle.dim) + 0j
    out = D.evolve(bundle, v, 0.0)
    np.testing.assert_array_equal(out, v)
    assert out is not v


def test_free_eigenvector_picks_up_phase(bundle):
    b0 = bundle.with_lambda(0.0)
    k = 9
    e = np.zeros(b0.dim, dtype=complex)
    e[k] = 1.0
    ell = b0.L0.diagonal()[k].real
    np.testing.assert_allclose(D.evolve(b0, e, 1.7), np.exp(-1.7j * ell) * e, atol=1e-12)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_group_property(t1, t2):
    b = _GROUP
    v = _GROUP_V
    a = D.evolve(b, D.evolve(b, v, t1), t2)
    c = D.evolve(b, v, t1 + t2)
    assert np.linalg.norm(a - c) <= 1e-9


_GROUP = lv.build(spin_boson(beta=1.0, lam=0.1, p=0.5), fock.midpoint_grid(3.0, 4), 2)
_GROUP_V = np.random.default_rng(1).normal(size=_GROUP.dim) + 0j
_GROUP_V /= np.linalg.norm(_GROUP_V)


def test_unitarity_and_energy_conservation(bundle):
    v = np.random.default_rng(2).normal(size=bundle.dim) + 0j
    v /= np.linalg.norm(v)
    L = bundle.L_lambda
    e0 = kms.expectation(L, v)
    for t in (0.5, 2.0, 8.0):
        w = D.evolve(bundle, v, t)
        assert abs(np.linalg.norm(w) - 1) <= 1e-9 * t
        assert kms.expectation(L, w) == pytest.approx(e0, abs=1e-9)


def test_identity_observable_constant(bundle):
    tr = D.heisenberg_expectation(bundle, _excited(bundle), sp.identity(bundle.dim, format="csr"),
                                  np.linspace(0, 5, 11))
    np.testing.assert_allclose(tr.values, 1.0, atol=1e-12)
    assert len(tr.times) == len(tr.values) == len(tr.cesaro)


def test_kernel_state_is_stationary(bundle):
    psi, _ = spectral.kernel_vector(bundle)
    A = _population(bundle)
    tr = D.heisenberg_expectation(bundle, psi, A, np.linspace(0, 10, 21))
    assert np.ptp(tr.values) <= 1e-6
    r = D.rte_diagnostic(bundle, psi, A, 10.0, samples=20, reference=psi)
    assert r.deviation <= 1e-6


def test_kms_vector_drift_bounded_by_residual(bundle):
    # the truncated KMS vector is stationary only up to its kernel residual
    omega = kms.interacting_kms_vector(bundle)
    res = kms.kernel_residual(bundle, omega)
    A = _population(bundle)
    tr = D.heisenberg_expectation(bundle, omega, A, np.linspace(0, 10, 21))
    assert np.ptp(tr.values) <= 2 * 10.0 * res * np.linalg.norm(A.toarray(), 2)


def test_uncoupled_oscillates_without_decay(bundle):
    b0 = bundle.with_lambda(0.0)
    init = np.kron(np.kron([1.0, 1.0], [1.0, 1.0]) / 2, fock.vacuum(b0.basis)).astype(complex)
    coh = lv.atom_operator(b0.spec, b0.basis, np.array([[0, 1.0], [1.0, 0]]))
    tr = D.heisenberg_expectation(b0, init, coh, np.linspace(0, 4 * np.pi, 41))
    np.testing.assert_allclose(tr.values, np.cos(tr.times), atol=1e-10)
    pop = D.heisenberg_expectation(b0, _excited(b0), _population(b0), np.linspace(0, 10, 11))
    np.testing.assert_allclose(pop.values, 1.0, atol=1e-12)


def test_cesaro_definition_and_smoothing():
    t = np.linspace(0, 10, 1001)
    v = np.cos(t)
    c = D.cesaro_average(t, v)
    np.testing.assert_allclose(c[1:], np.sin(t[1:]) / t[1:], atol=1e-5)
    assert c[0] == 1.0
    assert np.max(np.abs(c)) <= np.max(np.abs(v))


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30))
def test_cesaro_bounded_by_values(vals):
    t = np.arange(len(vals), dtype=float)
    c = D.cesaro_average(t, vals)
    assert np.max(np.abs(c)) <= np.max(np.abs(vals)) + 1e-12


def test_times_validated(bundle):
    with pytest.raises(ValueError):
        D.heisenberg_expectation(bundle, _excited(bundle), _population(bundle), [0.0, 2.0, 1.0])
    with pytest.raises(ValueError):
        D.heisenberg_expectation(bundle, _excited(bundle), _population(bundle), [1.0, 2.0])


def test_recurrence_time(bundle):
    assert D.recurrence_time(bundle) == pytest.approx(2 * np.pi / bundle.grid.spacing)


def _rte_model(G=None, n=4):
    kw = {} if G is None else {"G": G}
    spec = spin_boson(beta=4.0, lam=0.1, p=0.5, amplitude=2.0, cutoff=2.0, **kw)
    b = lv.build(spec, fock.resonant_grid(1.0, 16, 4), n)
    return b, _excited(b), _population(b)


@pytest.mark.slow
def test_recurrence_honesty():
    b, init, A = _rte_model()
    Trec = D.recurrence_time(b)
    tr = D.heisenberg_expectation(b, init, A, np.linspace(0, 1.1 * Trec, 221))
    eq = kms.expectation(A, kms.interacting_kms_vector(b))
    dev = np.abs(tr.values - eq)
    mid = (tr.times > 0.3 * Trec) & (tr.times < 0.7 * Trec)
    near = tr.times > 0.9 * Trec
    assert dev[mid].max() < 0.1 * dev[0]
    assert dev[near].max() >= 0.5 * dev[0]


def test_diagonal_coupling_does_not_relax():
    b, init, A = _rte_model(G=np.diag([1.0, -1.0]), n=2)
    r = D.rte_diagnostic(b, init, A, 0.95 * D.recurrence_time(b), samples=60)
    np.testing.assert_allclose(r.trend / r.initial_deviation, 1.0, atol=1e-10)
