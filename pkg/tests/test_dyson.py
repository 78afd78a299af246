import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermofield import dyson as Dy
from thermofield import model
from thermofield.fock import BudgetError
from thermofield.model import AtomSpec, spin_boson

LN3 = math.log(3.0)


@pytest.fixture(scope="module")
def lattice_spec():
    return spin_boson(beta=1.0, p=0.5, cutoff=1.0)


@pytest.fixture(scope="module")
def fv(lattice_spec):
    return Dy.finite_volume_model(lattice_spec, 2 * math.pi)


# -- propagator and Wick ----------------------------------------------------

def test_single_mode_equal_time_value():
    m = Dy.single_mode(1.0, 1.0, LN3)
    assert Dy.propagator(m, 0, 0, 0.3, 0.3) == pytest.approx(0.5 / math.tanh(LN3 / 2), rel=1e-14)
    assert Dy.propagator(m, 0, 0, 0.3, 0.3) == pytest.approx(1.0, abs=1e-12)
    assert Dy.brute_force_expectation(m, [0, 0], [0.3, 0.3]) == pytest.approx(1.0, abs=1e-8)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_kms_periodicity(a, b):
    beta = 2.0
    m = Dy.ModeSet([0.7, 1.9], [[1.0, 0.5 + 0.2j]], beta)
    s = beta * min(a, b)
    assert Dy.propagator(m, 0, 0, 0.0, s) == pytest.approx(Dy.propagator(m, 0, 0, s, beta), rel=1e-12)


def test_propagator_rejects_bad_order():
    m = Dy.single_mode()
    with pytest.raises(ValueError):
        Dy.propagator(m, 0, 0, 0.5, 0.2)
    with pytest.raises(ValueError):
        Dy.propagator(m, 0, 0, 0.0, 1.5)


def test_modeset_validation():
    with pytest.raises(ValueError):
        Dy.ModeSet([1.0, 2.0], [[1.0]], 1.0)
    with pytest.raises(ValueError):
        Dy.ModeSet([0.0], [[1.0]], 1.0)


def test_zero_mode_decays_like_inverse_volume(lattice_spec):
    vals = [Dy.zero_mode_contribution(Dy.finite_volume_model(lattice_spec, L), 0, 0, 0.1, 0.4) * L ** 3
            for L in (10.0, 20.0, 40.0)]
    np.testing.assert_allclose(vals, vals[0], rtol=1e-10)


def test_finite_volume_propagator_tends_to_continuum(lattice_spec):
    cont = Dy.continuum_propagator(lattice_spec, 0, 0, 0.1, 0.4)
    errs = [abs(Dy.propagator(Dy.finite_volume_model(lattice_spec, L), 0, 0, 0.1, 0.4) - cont)
            for L in (10.0, 20.0, 40.0)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-4 * cont


def test_lattice_shells_counts():
    sq, mult = Dy.lattice_shells(2)
    assert dict(zip(sq.tolist(), mult.tolist())) == {0: 1, 1: 6, 2: 12, 3: 8, 4: 6}


def test_auto_cutoff_tail(lattice_spec):
    n = Dy.auto_n_cut(lattice_spec, 2 * math.pi)
    assert n >= 1
    with pytest.raises(ValueError):
        Dy.auto_n_cut(spin_boson(cutoff=math.inf), 2 * math.pi)


@pytest.mark.parametrize("two_n,count", [(0, 1), (2, 1), (4, 3), (6, 15), (8, 105), (10, 945)])
def test_pairing_count(two_n, count):
    P = Dy.enumerate_pairings(two_n)
    assert P.shape[0] == count == math.prod(range(1, two_n, 2)) if two_n else P.shape[0] == 1
    for p in P:
        assert sorted(p.ravel().tolist()) == list(range(two_n))
        assert np.all(p[:, 0] < p[:, 1])


def test_pairing_errors():
    with pytest.raises(ValueError):
        Dy.enumerate_pairings(3)
    with pytest.raises(BudgetError):
        Dy.enumerate_pairings(14)


def test_wick_two_point_is_propagator():
    m = Dy.ModeSet([0.5, 1.5], [[1.0, 0.3]], 1.5)
    assert Dy.wick_expectation(m, [0, 0], [0.2, 0.9]) == Dy.propagator(m, 0, 0, 0.2, 0.9)


def test_wick_rejects_odd_and_unsorted():
    m = Dy.single_mode()
    with pytest.raises(ValueError, match="odd"):
        Dy.wick_expectation(m, [0, 0, 0], [0.1, 0.2, 0.3])
    with pytest.raises(ValueError, match="ascending"):
        Dy.wick_expectation(m, [0, 0], [0.5, 0.1])


@pytest.mark.parametrize("two_n", [2, 4, 6])
def test_wick_matches_brute_force(two_n):
    rng = np.random.default_rng(two_n)
    for E, beta in ((1.0, LN3), (0.6, 2.0), (2.0, 0.7)):
        m = Dy.single_mode(E, 0.8, beta)
        t = np.sort(rng.uniform(0, beta, two_n))
        w = Dy.wick_expectation(m, [0] * two_n, t)
        b = Dy.brute_force_expectation(m, [0] * two_n, t, n_max=40)
        assert w == pytest.approx(b, rel=1e-6)


def test_wick_two_modes_matches_brute_force():
    m = Dy.ModeSet([0.8, 1.3], [[1.0, 0.4], [0.2, -0.7]], 1.2)
    t = [0.0, 0.3, 0.5, 1.1]
    a = [0, 1, 1, 0]
    assert Dy.wick_expectation(m, a, t) == pytest.approx(Dy.brute_force_expectation(m, a, t, n_max=25),
                                                         rel=1e-6)


# -- segments and pair bounds -----------------------------------------------

def test_segment_partition():
    part = Dy.SegmentPartition(4, 8.0)
    assert part.width == 2.0 and part.tau == 1.0
    assert part.segment(2) == (2.0, 4.0)
    assert [part.locate(t) for t in (0.0, 1.99, 2.0, 7.9, 8.0)] == [1, 1, 2, 4, 4]
    with pytest.raises(ValueError):
        Dy.SegmentPartition(3, 1.0)
    with pytest.raises(IndexError):
        part.segment(5)


def test_segment_distance_values():
    part = Dy.SegmentPartition(4, 8.0)
    assert Dy.segment_distance(part, 1, 3) == (2.0, 2.0, 2.0)
    assert Dy.segment_distance(part, 2, 2)[0] == 0.0
    assert Dy.segment_distance(part, 2, 3)[0] == 0.0
    with pytest.raises(IndexError):
        Dy.segment_distance(part, 0, 1)


@given(st.integers(1, 8), st.integers(1, 8), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_segment_distance_is_a_lower_bound(l, r, a, b):
    part = Dy.SegmentPartition(8, 4.0)
    lo_l, hi_l = part.segment(l)
    lo_r, hi_r = part.segment(r)
    tl, tr = lo_l + a * (hi_l - lo_l), lo_r + b * (hi_r - lo_r)
    dm, dp, d = Dy.segment_distance(part, l, r)
    gap = abs(tl - tr)
    assert dm <= gap + 1e-12 and dp <= part.beta - gap + 1e-12


def test_pair_bound_zero_distance_uniform_in_beta(lattice_spec):
    vals = [Dy.pair_bound_distance(lattice_spec.replace(beta=b), b, 0.0) / (1 + 1 / b) for b in (1, 10, 100)]
    assert max(vals) <= 1.2 * min(vals)


def test_pair_bound_distance_decay(lattice_spec):
    beta = 40.0
    p = 0.5
    for d in (2.0, 4.0, 8.0):
        v = Dy.pair_bound_distance(lattice_spec.replace(beta=beta), beta, d)
        # |g(u)| <= u^p and 1/(1 - e^{-beta u}) <= 1 + 1/(beta u)
        ceiling = 4 * 4 * math.pi * (math.gamma(3 + 2 * p) + math.gamma(2 + 2 * p) * d / beta)
        assert v * d ** (3 + 2 * p) <= ceiling


def test_pair_bound_dominates_two_point(fv):
    rng = np.random.default_rng(7)
    part = Dy.SegmentPartition(4, fv.beta)
    for _ in range(100):
        l, r = sorted(rng.integers(1, 5, size=2))
        tl = rng.uniform(*part.segment(l))
        tr = rng.uniform(*part.segment(r))
        if tl > tr:
            tl, tr = tr, tl
        assert abs(Dy.propagator(fv, 0, 0, tl, tr)) <= Dy.pair_bound(fv, part, l, r)


def test_gamma_sum_two_segments(fv):
    part = Dy.SegmentPartition(2, fv.beta)
    row = Dy.pair_bound(fv, part, 1, 1) + Dy.pair_bound(fv, part, 1, 2)
    assert Dy.gamma_sum(fv, part) == pytest.approx(row, rel=1e-14)


def test_gamma_formula_with_constant_fitted_at_largest_beta(lattice_spec):
    two_m = 4
    ref = Dy.SegmentPartition(two_m, 16.0)
    spec16 = lattice_spec.replace(beta=16.0)
    C = Dy.fit_gamma_constant(spec16, 0.5, ref)
    for beta in (4.0, 8.0, 16.0):
        r = Dy.gamma_constant(Dy.SegmentPartition(two_m, beta), lattice_spec.replace(beta=beta), constant=C)
        assert r.gamma_sum <= r.gamma_formula * (1 + 1e-12)


def test_gamma_bracket_grows_with_segments():
    vals = [Dy.gamma_bracket(4.0, m, 0.5) for m in (2, 4, 8, 16)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert (vals[2] - 1.25) / (vals[1] - 1.25) == pytest.approx(8.0)


def test_gamma_needs_p_above_minus_one(fv):
    bad = fv.spec.replace(couplings=(model.CouplingTerm(fv.spec.couplings[0].G, model.FormFactor(p=-1.0)),))
    with pytest.raises((ValueError, NotImplementedError)):
        Dy.gamma_constant(Dy.SegmentPartition(2, 1.0), bad)


def test_volume_stability(lattice_spec):
    spec = lattice_spec.replace(beta=2.0)
    part = Dy.SegmentPartition(4, 2.0)
    L0 = 4 * math.pi
    a = Dy.finite_volume_model(spec, L0)
    b = Dy.finite_volume_model(spec, 2 * L0)
    for f in (lambda m: Dy.gamma_sum(m, part), lambda m: Dy.pair_bound(m, part, 1, 3),
              lambda m: Dy.propagator(m, 0, 0, 0.0, 0.5)):
        assert abs(f(a) - f(b)) <= 0.05 * abs(f(b))


# -- graph expansion ---------------------------------------------------------

def test_graph_bound_term_values():
    part = Dy.SegmentPartition(2, 1.0)
    assert Dy.graph_bound_term([1, 1], 0.0, 1.0, part, 3.0, 1.0) == 0.0
    # C' |lam| Gamma beta/2M = 0.1
    assert Dy.graph_bound_term([1, 1], 0.1, 1.0, part, 2.0, 1.0) == pytest.approx(0.01, rel=1e-14)
    assert Dy.graph_bound_term([2], 1.0, 1.0, part, 2.0, 1.0) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ValueError):
        Dy.graph_bound_term([0], 0.1, 1.0, part, 1.0, 1.0)


def test_graph_decomposition_sums_to_wick(fv):
    part = Dy.SegmentPartition(4, fv.beta)
    t = [0.05, 0.3, 0.6, 0.9]
    dec = Dy.graph_decomposition(fv, part, [0] * 4, t)
    assert sum(dec.values()) == pytest.approx(Dy.wick_expectation(fv, [0] * 4, t), rel=1e-12)
    assert len(dec) == 3


def test_graph_bound_dominates_exact(fv):
    rng = np.random.default_rng(11)
    part = Dy.SegmentPartition(4, fv.beta)
    for _ in range(20):
        t = np.sort(rng.uniform(0, fv.beta, 4))
        segs = np.array([part.locate(x) for x in t])
        dec = Dy.graph_decomposition(fv, part, [0] * 4, t)
        bound = 0.0
        for graph in dec:
            bound += math.prod(Dy.pair_bound(fv, part, l, r) for l, r in graph)
        assert abs(Dy.wick_expectation(fv, [0] * 4, t)) <= bound
        assert all(abs(v) <= math.prod(Dy.pair_bound(fv, part, l, r) for l, r in g) for g, v in dec.items())


def test_series_bound_values():
    assert Dy.series_bound(0.0) == 0.0
    x = 0.1
    head = x * (1 + x * math.sqrt(2) / 2 + x * x * 3 ** 1.5 / 6)
    assert Dy.series_bound(x) == pytest.approx(0.1109376696, abs=1e-9)
    assert Dy.series_bound(x) > head
    with pytest.raises(ValueError):
        Dy.series_bound(-1.0)


def test_series_terms_superlinear_decay():
    def term(k, x=3.0):
        j = k + 1
        return math.exp(k * math.log(x) + 0.5 * j * math.log(j) - math.lgamma(j + 1))

    ratios = [term(k + 1) / term(k) for k in range(20, 200, 20)]
    assert all(b < a for a, b in zip(ratios, ratios[1:])) and ratios[-1] < 0.5


@settings(max_examples=30)
@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_series_bound_monotone_convex(a, b):
    lo, hi = min(a, b), max(a, b)
    f = Dy.series_bound
    assert f(lo) <= f(hi) + 1e-15
    mid = 0.5 * (lo + hi)
    assert f(mid) <= 0.5 * (f(lo) + f(hi)) * (1 + 1e-10) + 1e-15


# -- bound vs exact ----------------------------------------------------------

def test_omega_q_bound_at_zero_coupling(fv):
    for two_m in (2, 4, 8):
        part = Dy.SegmentPartition(two_m, fv.beta)
        assert Dy.omega_q_bound(fv, part) == pytest.approx(2 * math.exp(-2 * part.tau * 1.0))
    taus = [Dy.SegmentPartition(m, 1.0).tau for m in (2, 4, 8)]
    vals = [Dy.omega_q_bound(fv, Dy.SegmentPartition(m, 1.0)) for m in (2, 4, 8)]
    # tau shrinks as 2M grows, so the bound grows: decreasing in tau
    assert all(a < b for a, b in zip(vals, vals[1:])) and taus[0] > taus[1]


def test_omega_q_bound_small_coupling_arithmetic(lattice_spec):
    spec = lattice_spec.replace(beta=8.0, lam=1e-4)
    m = Dy.finite_volume_model(spec, 2 * math.pi)
    part = Dy.SegmentPartition(2, 8.0)
    assert part.tau == 2.0
    b = Dy.omega_q_bound(m, part)
    assert 2 * math.exp(-4) < b < 0.04 + Dy.series_bound(
        Dy.c_prime(spec) * 1e-4 * Dy.gamma_sum(m, part) * 2 * part.tau)


def test_omega_q_bound_checks_arguments(fv):
    with pytest.raises(ValueError):
        Dy.omega_q_bound(fv, Dy.SegmentPartition(2, 2.0))
    with pytest.raises(ValueError):
        Dy.omega_q_bound(fv, Dy.SegmentPartition(2, 1.0), tau=0.3)


def test_omega_q_exact_even_in_lambda(fv):
    a = Dy.omega_q_exact(fv.with_spec(fv.spec.replace(lam=0.1)), 2)
    b = Dy.omega_q_exact(fv.with_spec(fv.spec.replace(lam=-0.1)), 2)
    assert a == pytest.approx(b, rel=1e-10)


def test_omega_q_exact_zero_coupling_is_atomic(fv):
    val = Dy.omega_q_exact(fv, 2)
    assert val == pytest.approx(math.exp(-1) / (1 + math.exp(-1)), rel=1e-12)


def test_exact_budget(fv):
    with pytest.raises(BudgetError):
        Dy.omega_q_exact(fv, 6, budget=100)


def test_bound_table_rows(fv):
    rows = Dy.bound_table(fv, [1.0], [0.0, 0.05], [2], n_total_max=2)
    assert len(rows) == 2 and all(len(r) == len(Dy.BOUND_CSV_HEADER) for r in rows)
    assert all(r[-1] == r[4] - r[5] >= 0 for r in rows)


# -- atomic tail and trace inequalities ---------------------------------------

def test_atomic_tail_values():
    r = Dy.atomic_tail(AtomSpec((0.0, 1.0)), LN3, 2)
    assert r.ratio == pytest.approx(0.25, rel=1e-14) and r.closed_form == pytest.approx(0.25, rel=1e-14)
    assert r.bound17 == pytest.approx(2 / 3 / LN3, rel=1e-14) and r.bound17 == pytest.approx(0.6069, abs=1e-4)
    assert r.holds17


@pytest.mark.parametrize("beta", [1.0, 2.0, 4.0, 8.0])
@pytest.mark.parametrize("two_m", [2, 4])
def test_atomic_tail_second_bound(beta, two_m):
    r = Dy.atomic_tail(AtomSpec((0.0, 1.0)), beta, two_m)
    assert r.ratio == pytest.approx(r.closed_form, rel=1e-14)
    assert r.holds18


def test_atomic_tail_first_bound_range():
    # holds exactly while beta <= 2 (1 + e^{-beta}) for a two level atom
    assert Dy.atomic_tail(AtomSpec((0.0, 1.0)), 2.0, 2).holds17
    assert not Dy.atomic_tail(AtomSpec((0.0, 1.0)), 4.0, 2).holds17


def test_schatten_norms():
    A = np.diag([3.0, -4.0])
    assert Dy.schatten_norm(A, 1) == pytest.approx(7.0)
    assert Dy.schatten_norm(A, 2) == pytest.approx(5.0)
    assert Dy.schatten_norm(A, math.inf) == 4.0
    assert Dy.schatten_norm(A, 1e6) == pytest.approx(4.0, rel=1e-5)


def test_trace_inequalities(fv):
    rep = Dy.trace_inequality_checks(200, seed=0, fv=fv.with_spec(fv.spec.replace(lam=0.1)))
    assert rep.ok and rep.holder_checked == 200 and rep.peierls_checked == 200
    assert all(r <= 1 for _, r in rep.partition_ratios)


def test_trace_equality_cases():
    rng = np.random.default_rng(0)
    A = Dy._random_hermitian(rng, 4)
    assert Dy.schatten_norm(A, 1.0) == pytest.approx(np.abs(np.linalg.eigvalsh(A)).sum())
    from scipy.linalg import expm
    B = Dy._random_hermitian(rng, 4, 0.3)
    eB = expm(B)
    assert np.trace(expm(0 * A + B)).real / np.trace(eB).real == pytest.approx(1.0)
