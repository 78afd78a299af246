"""Finite-volume Dyson/Wick machinery and the bound on the excited-state weight.

The finite-volume field lives on the periodic lattice ``n in Z^3`` with
energies ``2 pi |n| / L`` (the zero mode is given energy 1). Form factors are
angle independent, so every lattice shell ``{|n| = r}`` couples through a
single collective mode with coupling ``sqrt(mult) * g(n)``; the remaining
orthogonal combinations decouple and cancel from all normalized traces. This
makes exact dense traces affordable.

Field normalization is ``phi = (a* + a) / sqrt 2``, so two-point functions
carry an overall factor 1/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.linalg import eigh, eigvalsh, expm

from . import fock, kernels
from .fock import BudgetError
from .model import AtomSpec, ModelSpec


# ---------------------------------------------------------------------------
# bath descriptions


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Discrete bosonic modes: energies ``E_s`` and couplings ``g[alpha, s]``."""

    energies: np.ndarray
    couplings: np.ndarray  # (n_alpha, n_modes)
    beta: float

    def __post_init__(self):
        E = np.asarray(self.energies, dtype=float)
        g = np.atleast_2d(np.asarray(self.couplings, dtype=complex))
        if g.shape[1] != E.size:
            raise ValueError("couplings must have one column per mode")
        if np.any(E <= 0):
            raise ValueError("mode energies must be positive")
        object.__setattr__(self, "energies", E)
        object.__setattr__(self, "couplings", g)


def single_mode(E: float = 1.0, g: complex = 1.0, beta: float = 1.0) -> ModeSet:
    return ModeSet(np.array([E]), np.array([[g]]), beta)


@dataclass(frozen=True, eq=False)
class FiniteVolumeModel:
    spec: ModelSpec
    L: float
    n_cut: int
    shell_radius: np.ndarray  # |n| per shell, 0 for the zero mode
    multiplicity: np.ndarray
    modes: ModeSet

    @property
    def beta(self) -> float:
        return self.spec.beta

    @property
    def lam(self) -> float:
        return self.spec.lam

    @property
    def atom(self) -> AtomSpec:
        return self.spec.atom

    def with_spec(self, spec: ModelSpec) -> "FiniteVolumeModel":
        return finite_volume_model(spec, self.L, self.n_cut)


@lru_cache(maxsize=64)
def lattice_shells(n_cut: int):
    """``(|n|^2 values, multiplicities)`` of ``Z^3`` points with ``|n| <= n_cut``."""
    r = np.arange(-n_cut, n_cut + 1)
    sq = (r[:, None, None] ** 2 + r[None, :, None] ** 2 + r[None, None, :] ** 2).ravel()
    sq = sq[sq <= n_cut * n_cut]
    vals, counts = np.unique(sq, return_counts=True)
    return vals, counts


def _shell_weight(spec: ModelSpec, L: float, sq: np.ndarray, mult: np.ndarray) -> np.ndarray:
    k = 2 * np.pi * np.sqrt(sq[sq > 0]) / L
    w = np.zeros(sq.size)
    for t in spec.couplings:
        w[sq > 0] = np.maximum(w[sq > 0], mult[sq > 0] * np.abs(t.ff.g(k)) ** 2)
    return w


def auto_n_cut(spec: ModelSpec, L: float, rel_tail: float = 1e-8, n_max_search: int = 200) -> int:
    """Smallest lattice radius whose dropped tail of ``sum |g(n)|^2`` is <= ``rel_tail``."""
    ff = spec.couplings[0].ff
    if math.isinf(ff.cutoff):
        raise ValueError("lattice cutoff needs a decaying form factor")
    top = abs(ff.center) + 8 * ff.cutoff
    big = int(math.ceil(top * L / (2 * np.pi))) + 2
    big = min(big, n_max_search)
    sq, mult = lattice_shells(big)
    w = _shell_weight(spec, L, sq, mult)
    total = w.sum()
    if total == 0:
        return 1
    cum = np.cumsum(w)
    radius = np.sqrt(sq)
    ok = (total - cum) <= rel_tail * total
    return max(1, int(math.ceil(radius[np.argmax(ok)])))


def finite_volume_model(spec: ModelSpec, L: float, n_cut: int | None = None) -> FiniteVolumeModel:
    if n_cut is None:
        n_cut = auto_n_cut(spec, L)
    sq, mult = lattice_shells(n_cut)
    radius = np.sqrt(sq.astype(float))
    scale = (2 * np.pi / L) ** 1.5
    E = np.where(sq == 0, 1.0, 2 * np.pi * radius / L)
    g = np.zeros((len(spec.couplings), sq.size), dtype=complex)
    for a, t in enumerate(spec.couplings):
        k = 2 * np.pi * radius[1:] / L
        g[a, 1:] = scale * np.sqrt(mult[1:]) * t.ff.g(k)
        g[a, 0] = scale
    return FiniteVolumeModel(spec, float(L), int(n_cut), radius, mult, ModeSet(E, g, spec.beta))


def _modes_of(bath) -> ModeSet:
    return bath.modes if isinstance(bath, FiniteVolumeModel) else bath


# ---------------------------------------------------------------------------
# two-point functions and Wick expansion


def propagator(bath, alpha_l: int, alpha_r: int, t_l: float, t_r: float,
               include_zero_mode: bool = True) -> float:
    """``omega(phi_l(t_l) phi_r(t_r))`` for ``0 <= t_l <= t_r <= beta``, ``phi(t) = e^{-tH} phi e^{tH}``."""
    ms = _modes_of(bath)
    beta = ms.beta
    if not (0 <= t_l <= t_r <= beta * (1 + 1e-14)):
        raise ValueError("need 0 <= t_l <= t_r <= beta")
    E = ms.energies
    gl, gr = ms.couplings[alpha_l], ms.couplings[alpha_r]
    occ = -1.0 / np.expm1(-beta * E)  # e^{bE}/(e^{bE}-1)
    terms = (np.conj(gr) * gl * np.exp(-(beta + t_l - t_r) * E)
             + np.conj(gl) * gr * np.exp(-(t_r - t_l) * E)) * occ
    if not include_zero_mode and isinstance(bath, FiniteVolumeModel):
        terms = terms[1:]
    return 0.5 * float(np.real(np.sum(terms)))


def zero_mode_contribution(fv: FiniteVolumeModel, alpha_l, alpha_r, t_l, t_r) -> float:
    return propagator(fv, alpha_l, alpha_r, t_l, t_r) - \
        propagator(fv, alpha_l, alpha_r, t_l, t_r, include_zero_mode=False)


def continuum_propagator(spec: ModelSpec, alpha_l: int, alpha_r: int, t_l: float, t_r: float) -> float:
    """Infinite-volume limit of :func:`propagator` by radial quadrature."""
    beta = spec.beta
    fl, fr = spec.couplings[alpha_l].ff, spec.couplings[alpha_r].ff

    def integrand(u):
        gl, gr = complex(fl.g(u)), complex(fr.g(u))
        val = (np.conj(gr) * gl * math.exp(-(beta + t_l - t_r) * u)
               + np.conj(gl) * gr * math.exp(-(t_r - t_l) * u)) / (-math.expm1(-beta * u))
        return u * u * val.real

    top = _radial_top(fl)
    val, _ = integrate.quad(integrand, 0.0, top, limit=200, points=_radial_points(beta, top))
    return 0.5 * fl.angular_factor * val


def _radial_top(ff) -> float:
    return abs(ff.center) + 8.0 * ff.cutoff if not math.isinf(ff.cutoff) else 60.0


def _radial_points(beta, top):
    pts = [p for p in (0.1 / beta, 1.0 / beta, 5.0 / beta) if 0 < p < top]
    return pts or None


def enumerate_pairings(two_n: int, budget: int = 12) -> np.ndarray:
    """All ``(2N-1)!!`` perfect matchings of ``0..2N-1`` as an array ``(P, N, 2)``, ``l < r``.

    Canonical order: the lowest unpaired index is paired with partners in
    increasing order, recursively.
    """
    if two_n % 2 or two_n < 0:
        raise ValueError("number of points must be even")
    if two_n > budget:
        raise BudgetError(f"{two_n} points exceed the pairing budget {budget}", two_n)
    if two_n == 0:
        return np.zeros((1, 0, 2), dtype=np.int64)

    def rec(items):
        if not items:
            yield []
            return
        first, rest = items[0], items[1:]
        for i, partner in enumerate(rest):
            for tail in rec(rest[:i] + rest[i + 1:]):
                yield [(first, partner)] + tail

    return np.array(list(rec(list(range(two_n)))), dtype=np.int64)


def _check_points(alphas, times, beta):
    alphas = list(alphas)
    times = np.asarray(times, dtype=float)
    if len(alphas) != times.size:
        raise ValueError("alphas and times differ in length")
    if times.size % 2:
        raise ValueError("odd number of field operators: the expectation is not expanded")
    if np.any(np.diff(times) < 0) or times.size and (times[0] < 0 or times[-1] > beta * (1 + 1e-14)):
        raise ValueError("times must be ascending in [0, beta]")
    return alphas, times


def contraction_matrix(bath, alphas, times) -> np.ndarray:
    alphas, times = _check_points(alphas, times, _modes_of(bath).beta)
    n = times.size
    w = np.zeros((n, n))
    for l in range(n):
        for r in range(l + 1, n):
            w[l, r] = propagator(bath, alphas[l], alphas[r], times[l], times[r])
    return w


def wick_expectation(bath, alphas, times) -> float:
    """``omega(phi(t_1) ... phi(t_2N))`` as the sum over contraction schemes."""
    w = contraction_matrix(bath, alphas, times)
    return kernels.pairing_sum(enumerate_pairings(len(times)), w)


def brute_force_expectation(modes: ModeSet, alphas, times, n_max: int = 40) -> float:
    """Dense Gibbs-trace oracle for imaginary-time correlations of few-mode baths."""
    alphas, times = _check_points(alphas, times, modes.beta)
    beta = modes.beta
    basis = fock.enumerate_basis(modes.energies.size, n_max, budget=20000)
    H = basis.states @ modes.energies
    phis = [fock.field(basis, modes.couplings[a]).toarray() for a in range(modes.couplings.shape[0])]
    # tr(e^{-beta H} prod_k e^{-t_k H} phi e^{t_k H}) / Z, cyclically rearranged so every
    # exponent is non-positive: e^{-(beta + t_1 - t_n)H} phi_1 e^{-(t_2 - t_1)H} phi_2 ...
    shift = H.min()
    Hs = H - shift
    n = len(times)
    M = np.diag(np.exp(-(beta + times[0] - times[-1]) * Hs))
    for k in range(n):
        M = M @ phis[alphas[k]]
        if k + 1 < n:
            M = M * np.exp(-(times[k + 1] - times[k]) * Hs)[None, :]
    Z = np.sum(np.exp(-beta * Hs))
    return float(np.real(np.trace(M)) / Z)


# ---------------------------------------------------------------------------
# segments, graphs and pair bounds


@dataclass(frozen=True)
class SegmentPartition:
    two_m: int
    beta: float

    def __post_init__(self):
        if self.two_m < 1 or self.two_m % 2 and self.two_m != 1:
            raise ValueError("2M must be a positive even integer")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @property
    def width(self) -> float:
        return self.beta / self.two_m

    @property
    def tau(self) -> float:
        return self.beta / (2 * self.two_m)

    def segment(self, j: int):
        if not 1 <= j <= self.two_m:
            raise IndexError("segment index out of range")
        return ((j - 1) * self.width, j * self.width)

    def locate(self, t: float) -> int:
        return int(min(self.two_m, max(1, math.floor(t / self.width) + 1)))


def segment_distance(part: SegmentPartition, l: int, r: int):
    """``(d_minus, d_plus, d)`` lower bounds on ``|t_l - t_r|`` and ``beta - |t_l - t_r|``."""
    for j in (l, r):
        if not 1 <= j <= part.two_m:
            raise IndexError("segment index out of range")
    gap = abs(l - r)
    d_minus = 0.0 if gap == 0 else part.width * max(gap - 1, 0)
    d_plus = part.beta - part.width * (gap + 1)
    return d_minus, d_plus, min(d_minus, d_plus)


def pair_bound_distance(bath_or_spec, beta: float, d: float) -> float:
    """``4 max_a <g_a, e^{-d|k|} / (1 - e^{-beta|k|}) g_a>`` (mode sum or radial integral)."""
    if isinstance(bath_or_spec, (FiniteVolumeModel, ModeSet)):
        ms = _modes_of(bath_or_spec)
        weight = np.exp(-d * ms.energies) / (-np.expm1(-beta * ms.energies))
        return 4.0 * float(np.max(np.sum(np.abs(ms.couplings) ** 2 * weight, axis=1)))
    spec = bath_or_spec
    best = 0.0
    for t in spec.couplings:
        ff = t.ff

        def integrand(u, ff=ff):
            return u * u * abs(complex(ff.g(u))) ** 2 * math.exp(-d * u) / (-math.expm1(-beta * u))

        top = _radial_top(ff)
        val, _ = integrate.quad(integrand, 0.0, top, limit=200, points=_radial_points(beta, top))
        best = max(best, ff.angular_factor * val)
    return 4.0 * best


def pair_bound(bath_or_spec, part: SegmentPartition, l: int, r: int) -> float:
    return pair_bound_distance(bath_or_spec, part.beta, segment_distance(part, l, r)[2])


def gamma_bracket(beta: float, two_m: int, p: float) -> float:
    return 1.0 + 1.0 / beta + (beta / two_m) ** (-2.0 - 2.0 * p) / (p + 1.0)


@dataclass
class GammaResult:
    gamma_sum: float
    gamma_formula: float
    constant: float


def gamma_sum(bath_or_spec, part: SegmentPartition) -> float:
    """``max_l sum_r C(Delta_l, Delta_r)``."""
    rows = [sum(pair_bound(bath_or_spec, part, l, r) for r in range(1, part.two_m + 1))
            for l in range(1, part.two_m + 1)]
    return float(max(rows))


def fit_gamma_constant(bath_or_spec, p: float, reference: SegmentPartition) -> float:
    return gamma_sum(bath_or_spec, reference) / gamma_bracket(reference.beta, reference.two_m, p)


def gamma_constant(part: SegmentPartition, bath_or_spec, constant: float | None = None,
                   reference: SegmentPartition | None = None) -> GammaResult:
    """Row-sum constant and the closed-form ``C (1 + 1/beta + (beta/2M)^{-2-2p}/(p+1))``.

    ``constant`` is the frozen C; if omitted it is fitted at ``reference``
    (default: the partition itself).
    """
    spec = bath_or_spec.spec if isinstance(bath_or_spec, FiniteVolumeModel) else bath_or_spec
    p = spec.couplings[0].ff.p
    if p <= -1:
        raise ValueError("the row-sum bound needs p > -1")
    s = gamma_sum(bath_or_spec, part)
    if constant is None:
        constant = fit_gamma_constant(bath_or_spec, p, reference or part)
    return GammaResult(s, constant * gamma_bracket(part.beta, part.two_m, p), constant)


def graph_of(pairing: np.ndarray, segments: np.ndarray) -> tuple:
    """Multiset of segment pairs hit by a pairing, as a sorted tuple."""
    pairs = [tuple(sorted((int(segments[l]), int(segments[r])))) for l, r in pairing]
    return tuple(sorted(pairs))


def graph_decomposition(bath, part: SegmentPartition, alphas, times) -> dict:
    """``{graph: sum of A_P over pairings with that graph}``."""
    w = contraction_matrix(bath, alphas, times)
    segs = np.array([part.locate(t) for t in times])
    out: dict = {}
    for P in enumerate_pairings(len(times)):
        g = graph_of(P, segs)
        out[g] = out.get(g, 0.0) + float(np.prod(w[P[:, 0], P[:, 1]]))
    return out


def graph_bound_term(k_list, lam: float, beta: float, part: SegmentPartition, gamma: float,
                     c_prime: float) -> float:
    """``(C'|lam| Gamma beta/2M)^{sum k} prod k^{k/2} / k!``."""
    ks = [int(k) for k in k_list]
    if any(k < 1 for k in ks):
        raise ValueError("all k_j must be >= 1")
    x = c_prime * abs(lam) * gamma * part.width
    if x == 0:
        return 0.0
    logp = sum(0.5 * k * math.log(k) - math.lgamma(k + 1) for k in ks)
    return math.exp(sum(ks) * math.log(x) + logp)


def series_bound(x: float, rtol: float = 1e-12, max_terms: int = 100_000) -> float:
    """``x sum_{k>=0} x^k (k+1)^{(k+1)/2} / (k+1)!`` (an entire function of x)."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 0.0
    total = 0.0
    lx = math.log(x)
    for k in range(max_terms):
        j = k + 1
        term = math.exp(k * lx + 0.5 * j * math.log(j) - math.lgamma(j + 1))
        total += term
        # terms decay superexponentially once k exceeds ~ x^2
        if k > 2 and term <= rtol * total and k > x * x:
            break
    return x * total


def c_prime(spec: ModelSpec) -> float:
    return float(sum(t.norm for t in spec.couplings))


def omega_q_bound(fv: FiniteVolumeModel, part: SegmentPartition, tau: float | None = None,
                  gamma: float | None = None) -> float:
    """``2 e^{-2 tau Delta} + series_bound(C' |lam| Gamma 2 tau)`` with ``tau = beta/4M``."""
    if abs(part.beta - fv.beta) > 1e-12 * fv.beta:
        raise ValueError("partition and model disagree on beta")
    if tau is None:
        tau = part.tau
    elif abs(tau - part.tau) > 1e-12 * part.tau:
        raise ValueError("tau must equal beta / 4M for the partition")
    gap = fv.atom.gap
    G = gamma_sum(fv, part) if gamma is None else gamma
    x = c_prime(fv.spec) * abs(fv.lam) * G * 2.0 * tau
    return 2.0 * math.exp(-2.0 * tau * gap) + series_bound(x)


BOUND_CSV_HEADER = ("beta", "lambda", "two_m", "tau", "bound", "exact", "margin")


def bound_table(fv: FiniteVolumeModel, betas, lambdas, two_ms, n_total_max: int = 3,
                budget: int = 4000) -> list:
    """Rows ``(beta, lambda, 2M, tau, bound, exact, bound - exact)``."""
    rows = []
    for beta in betas:
        for lam in lambdas:
            m = fv.with_spec(fv.spec.replace(beta=beta, lam=lam))
            exact = omega_q_exact(m, n_total_max, budget=budget)
            for two_m in two_ms:
                part = SegmentPartition(two_m, beta)
                b = omega_q_bound(m, part)
                rows.append((beta, lam, two_m, part.tau, b, exact, b - exact))
    return rows


# ---------------------------------------------------------------------------
# exact dense traces


def finite_volume_hamiltonian(fv: FiniteVolumeModel, n_total_max: int, lam: float | None = None,
                              budget: int = 4000) -> np.ndarray:
    spec = fv.spec
    lam = spec.lam if lam is None else lam
    ms = fv.modes
    d = spec.atom.dim
    S = ms.energies.size
    dimF = fock.basis_dimension(S, n_total_max)
    if d * dimF > budget:
        raise BudgetError(f"dense finite-volume trace needs dim {d * dimF} > {budget}", d * dimF)
    basis = fock.enumerate_basis(S, n_total_max)
    H = np.kron(spec.atom.hamiltonian, np.eye(basis.dim))
    H = H + np.kron(np.eye(d), np.diag(basis.states @ ms.energies))
    for a, t in enumerate(spec.couplings):
        H = H + lam * np.kron(t.G, fock.field(basis, ms.couplings[a]).toarray())
    return 0.5 * (H + H.conj().T)


def _gibbs_weights(H: np.ndarray, beta: float):
    vals, vecs = eigh(H)
    w = np.exp(-beta * (vals - vals[0]))
    return vals, vecs, w


def omega_q_exact(fv: FiniteVolumeModel, n_total_max: int, budget: int = 4000) -> float:
    """``tr(e^{-beta H} (Q (x) 1)) / tr e^{-beta H}`` with ``Q = 1 - |phi_0><phi_0|``."""
    H = finite_volume_hamiltonian(fv, n_total_max, budget=budget)
    d = fv.atom.dim
    dimF = H.shape[0] // d
    vals, vecs, w = _gibbs_weights(H, fv.beta)
    ground_rows = vecs[:dimF, :]  # components on phi_0 (x) F
    q_diag = 1.0 - np.sum(np.abs(ground_rows) ** 2, axis=0)
    return float(np.sum(w * q_diag) / np.sum(w))


def partition_ratio(fv: FiniteVolumeModel, n_total_max: int, budget: int = 4000) -> float:
    """``tr e^{-beta H_0} / tr e^{-beta H_lam}`` on the truncated model (<= 1 by Peierls-Bogoliubov)."""
    H0 = finite_volume_hamiltonian(fv, n_total_max, lam=0.0, budget=budget)
    H1 = finite_volume_hamiltonian(fv, n_total_max, budget=budget)
    e0 = eigvalsh(H0)
    e1 = eigvalsh(H1)
    shift = min(e0[0], e1[0])
    return float(np.sum(np.exp(-fv.beta * (e0 - shift))) / np.sum(np.exp(-fv.beta * (e1 - shift))))


@dataclass
class AtomicTail:
    ratio: float
    closed_form: float
    bound17: float
    holds17: bool
    root18: float
    bound18: float
    holds18: bool


def atomic_tail(atom: AtomSpec, beta: float, two_m: int) -> AtomicTail:
    """Non-interacting excited-state weight against ``2 e^{-beta D}/beta`` and ``2 e^{-2 tau D}``."""
    E = np.asarray(atom.energies)
    x = np.exp(-beta * (E[1:] - E[0]))
    closed = float(x.sum() / (1.0 + x.sum()))
    rho = np.exp(-beta * (E - E[0]))
    ratio = float(rho[1:].sum() / rho.sum())
    gap = atom.gap
    b17 = 2.0 * math.exp(-beta * gap) / beta
    tau = beta / (2 * two_m)
    root = ratio ** (1.0 / two_m)
    b18 = 2.0 * math.exp(-2.0 * tau * gap)
    return AtomicTail(ratio, closed, b17, ratio <= b17, root, b18, root <= b18)


# ---------------------------------------------------------------------------
# trace inequalities


def schatten_norm(A: np.ndarray, p: float) -> float:
    s = np.linalg.svd(A, compute_uv=False)
    top = float(s.max()) if s.size else 0.0
    if math.isinf(p) or top == 0:
        return top
    return top * float(np.sum((s / top) ** p) ** (1.0 / p))


def _random_hermitian(rng, n, scale=1.0):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (X + X.conj().T) / 2.0


def _random_exponents(rng, n):
    """Hölder exponents with sum 1/p_j = 1, occasionally containing infinity."""
    if n == 1:
        return [1.0]
    w = rng.dirichlet(np.ones(n))
    if rng.random() < 0.3:
        k = rng.integers(n)
        w[k] = 0.0
        w = w / w.sum()
    return [math.inf if x == 0 else 1.0 / x for x in w]


@dataclass
class TraceReport:
    samples: int
    holder_checked: int = 0
    peierls_checked: int = 0
    partition_ratios: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def trace_inequality_checks(samples: int = 200, seed: int = 0, dim: int = 4,
                            fv: FiniteVolumeModel | None = None, n_total_max: int = 2,
                            rtol: float = 1e-10) -> TraceReport:
    """Hölder and Peierls-Bogoliubov on random Hermitian matrices, plus
    ``tr e^{-beta H_0} / tr e^{-beta H_lam} <= 1`` on a finite-volume model."""
    rng = np.random.default_rng(seed)
    rep = TraceReport(samples)
    for s in range(samples):
        n = int(rng.integers(1, 4))
        mats = [_random_hermitian(rng, dim) for _ in range(n)]
        ps = _random_exponents(rng, n)
        prod = mats[0]
        for A in mats[1:]:
            prod = prod @ A
        lhs = schatten_norm(prod, 1.0)
        rhs = math.prod(schatten_norm(A, p) for A, p in zip(mats, ps))
        rep.holder_checked += 1
        if lhs > rhs * (1 + rtol):
            rep.violations.append(("holder", s, lhs, rhs, ps))
        A = _random_hermitian(rng, dim, 0.5)
        B = _random_hermitian(rng, dim, 0.5)
        eB = expm(B)
        lhs = np.trace(expm(A + B)).real / np.trace(eB).real
        rhs = math.exp(np.trace(A @ eB).real / np.trace(eB).real)
        rep.peierls_checked += 1
        if lhs < rhs * (1 - rtol):
            rep.violations.append(("peierls", s, lhs, rhs))
    if fv is not None:
        for lam in (fv.lam, -fv.lam, 2 * fv.lam):
            r = partition_ratio(fv.with_spec(fv.spec.replace(lam=lam)), n_total_max)
            rep.partition_ratios.append((lam, r))
            if r > 1 + rtol:
                rep.violations.append(("partition", lam, r, 1.0))
    return rep
