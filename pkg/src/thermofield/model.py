"""Physical model: toy atom, coupling operators, form factors and the glued map.

Units are dimensionless (hbar = k_B = 1). Form factors are angle independent,
so every integral over the sphere collapses to ``angular_factor`` (4 pi).

The glued map sends a form factor ``g`` on positive frequencies to a function on
the whole real line::

    tau(u) = w(u) * |u|^(p + 1/2) * gt(u)            u > 0
    tau(u) = w(u) * |u|^(p + 1/2) * e^{i phi} conj(gt(-u))   u < 0

with ``w(u) = sqrt(u / (1 - exp(-beta u)))``. ``w`` is analytic across zero and
satisfies ``exp(-beta u / 2) w(u) = w(-u)``, which is how the commutant weight
``exp(-beta u/2) tau(u)`` is evaluated without overflow.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.special import binom

FOUR_PI = 4.0 * math.pi
_IR_CLASSES = (-0.5, 0.5, 1.5)


class UnsupportedFeatureError(NotImplementedError):
    pass


class QuadratureError(RuntimeError):
    def __init__(self, message, partial_sums=None):
        super().__init__(message)
        self.partial_sums = partial_sums or []


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class AtomSpec:
    energies: tuple

    def __post_init__(self):
        e = tuple(float(x) for x in self.energies)
        object.__setattr__(self, "energies", e)
        if len(e) < 2:
            raise ValueError("atom needs at least two levels")
        if any(b <= a for a, b in zip(e, e[1:])):
            raise ValueError(f"energies must be strictly increasing, got {e}")

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def hamiltonian(self) -> np.ndarray:
        return np.diag(self.energies)

    @property
    def gap(self) -> float:
        return self.energies[1] - self.energies[0]


@dataclass(frozen=True)
class FormFactor:
    """``g(u) = u^p * gt(u)`` with ``gt(u) = c e^{i phase0} exp(-((u - center)/cutoff)^2)``.

    ``cutoff=inf`` gives the constant profile used in hand-checked examples.
    ``center != 0`` produces a profile with nonzero slope at the origin.
    """

    p: float = 0.5
    amplitude: float = 1.0
    cutoff: float = 1.0
    center: float = 0.0
    phase0: float = 0.0
    profile: str = "gaussian"
    angular_factor: float = FOUR_PI

    def __post_init__(self):
        if self.profile != "gaussian":
            raise UnsupportedFeatureError(f"profile family {self.profile!r} is not supported")
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")

    def profile_derivs(self, u, order: int) -> np.ndarray:
        """``d^j gt / du^j`` for ``j = 0..order``; shape ``(order + 1, *u.shape)``."""
        u = np.asarray(u, dtype=float)
        out = np.zeros((order + 1,) + u.shape, dtype=complex)
        c = self.amplitude * np.exp(1j * self.phase0)
        if math.isinf(self.cutoff):
            out[0] = c
            return out
        s = (u - self.center) / self.cutoff
        gauss = np.exp(-s * s)
        # d^j/ds^j e^{-s^2} = (-1)^j H_j(s) e^{-s^2}, physicists' Hermite polynomials
        herm = [np.ones_like(s), 2 * s, 4 * s * s - 2, 8 * s**3 - 12 * s]
        for j in range(order + 1):
            out[j] = c * (-1) ** j * herm[j] * gauss / self.cutoff**j
        return out

    def g(self, u):
        """Form factor at radial momentum ``u > 0``."""
        u = np.asarray(u, dtype=float)
        return u**self.p * self.profile_derivs(u, 0)[0]

    def scaled(self, s: float) -> "FormFactor":
        return FormFactor(self.p, self.amplitude * s, self.cutoff, self.center, self.phase0,
                          self.profile, self.angular_factor)


@dataclass(frozen=True)
class CouplingTerm:
    G: np.ndarray
    ff: FormFactor

    def __post_init__(self):
        G = np.array(self.G, dtype=complex)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValueError("coupling matrix must be square")
        if np.max(np.abs(G - G.conj().T), initial=0.0) > 1e-12 * max(1.0, np.abs(G).max(initial=0.0)):
            raise ValueError("coupling matrix must be Hermitian")
        G.setflags(write=False)
        object.__setattr__(self, "G", G)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.G, 2)) if self.G.size else 0.0


def glue_phase_for(p: float, phase0: float) -> float:
    """Phase making the glued function and its first two derivatives continuous at 0.

    p = -1/2 and p = 3/2 need ``2 phase0``; p = 1/2 needs ``pi + 2 phase0``; for
    p > 2 the function vanishes to third order at 0 and ``pi + 2 phase0`` is used.
    """
    if p == -0.5 or p == 1.5:
        return 2.0 * phase0
    return math.pi + 2.0 * phase0


@dataclass(frozen=True)
class ModelSpec:
    atom: AtomSpec
    couplings: tuple
    beta: float
    lam: float = 0.0
    glue_phase_override: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(self.couplings))
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        for c in self.couplings:
            if c.G.shape != (self.atom.dim, self.atom.dim):
                raise ValueError("coupling matrix shape does not match atom dimension")
        if self.couplings and self.glue_phase_override is None:
            ps = {c.ff.p for c in self.couplings}
            ph = {c.ff.phase0 for c in self.couplings}
            if len(ps) > 1 or len(ph) > 1:
                raise ValueError("all form factors must share p and phase0 (one glue phase)")

    @property
    def glue_phase(self) -> float:
        if self.glue_phase_override is not None:
            return float(self.glue_phase_override)
        if not self.couplings:
            return 0.0
        ff = self.couplings[0].ff
        return glue_phase_for(ff.p, ff.phase0)

    def replace(self, **kw) -> "ModelSpec":
        d = dict(atom=self.atom, couplings=self.couplings, beta=self.beta, lam=self.lam,
                 glue_phase_override=self.glue_phase_override)
        d.update(kw)
        return ModelSpec(**d)


def spin_boson(beta=1.0, lam=0.0, p=0.5, G=None, energies=(0.0, 1.0), **ff_kwargs) -> ModelSpec:
    """Two-level atom with a single ``sigma_x``-type coupling (the reference model)."""
    if G is None:
        G = np.array([[0.0, 1.0], [1.0, 0.0]])
    ff = FormFactor(p=p, **ff_kwargs)
    return ModelSpec(AtomSpec(energies), (CouplingTerm(np.asarray(G), ff),), beta, lam)


# ---------------------------------------------------------------------------
# thermal weight w(u) = sqrt(u / (1 - e^{-beta u})) and its derivatives

# x/(1-e^{-x}) = sum_k c_k x^k (Bernoulli numbers with B_1 = +1/2)
_F_SERIES = np.array([1.0, 0.5, 1 / 12, 0.0, -1 / 720, 0.0, 1 / 30240, 0.0,
                      -1 / 1209600, 0.0, 1 / 47900160, 0.0, -691 / 1307674368000])
_SERIES_CUT = 0.2


def _f_derivs(x: np.ndarray, order: int) -> np.ndarray:
    """Derivatives 0..order of ``f(x) = x / (1 - e^{-x})``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((order + 1,) + x.shape)
    small = np.abs(x) < _SERIES_CUT
    if np.any(small):
        xs = x[small]
        for j in range(order + 1):
            acc = np.zeros_like(xs)
            for k in range(len(_F_SERIES) - 1, j - 1, -1):
                coef = _F_SERIES[k] * math.perm(k, j)
                acc = acc * xs + coef
            out[j][small] = acc
    big = ~small
    if np.any(big):
        xb = x[big]
        with np.errstate(over="ignore"):
            q = -1.0 / np.expm1(-xb)  # 1 / (1 - e^{-x})
        q1 = -q * (q - 1.0)
        q2 = q * (q - 1.0) * (2.0 * q - 1.0)
        q3 = -q * (q - 1.0) * (6.0 * q * q - 6.0 * q + 1.0)
        fs = [xb * q, q + xb * q1, 2 * q1 + xb * q2, 3 * q2 + xb * q3]
        for j in range(order + 1):
            out[j][big] = fs[j]
    return out


def thermal_weight_derivs(u, beta: float, order: int) -> np.ndarray:
    """Derivatives 0..order (in ``u``) of ``w(u) = sqrt(u / (1 - e^{-beta u}))``."""
    u = np.asarray(u, dtype=float)
    fd = _f_derivs(beta * u, order)
    F = [fd[j] * beta ** (j - 1) for j in range(order + 1)]
    out = np.empty((order + 1,) + u.shape)
    out[0] = np.sqrt(F[0])
    # deep in the Boltzmann tail w underflows to 0; its derivatives do too
    s = np.where(out[0] > 0, out[0], np.inf)
    if order >= 1:
        out[1] = F[1] / (2 * s)
    if order >= 2:
        out[2] = F[2] / (2 * s) - F[1] ** 2 / (4 * s**3)
    if order >= 3:
        out[3] = F[3] / (2 * s) - 3 * F[1] * F[2] / (4 * s**3) + 3 * F[1] ** 3 / (8 * s**5)
    return out


def _radial_derivs(ff: FormFactor, phi: float, u: np.ndarray, order: int) -> np.ndarray:
    """Derivatives of ``k(u) = |u|^(p+1/2) * (gt(u) or e^{i phi} conj gt(-u))``."""
    a = ff.p + 0.5
    v = np.abs(u)
    sign = np.where(u > 0, 1.0, -1.0)
    gd = ff.profile_derivs(v, order)
    neg = u < 0
    if np.any(neg):
        gd[:, neg] = np.exp(1j * phi) * np.conj(gd[:, neg])
    out = np.zeros((order + 1,) + u.shape, dtype=complex)
    for j in range(order + 1):
        acc = np.zeros(u.shape, dtype=complex)
        for i in range(j + 1):
            falling = math.prod(a - r for r in range(i))
            acc += binom(j, i) * falling * v ** (a - i) * gd[j - i]
        out[j] = sign**j * acc
    return out


def glued_derivs(ff: FormFactor, beta: float, phi: float, u, order: int = 0,
                 commutant: bool = False) -> np.ndarray:
    """Derivatives 0..order of the glued function (or of ``e^{-beta u/2}`` times it)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u == 0):
        raise ValueError("the glued map is not evaluated at u = 0")
    if commutant:
        wd = thermal_weight_derivs(-u, beta, order)
        wd = wd * ((-1.0) ** np.arange(order + 1))[(slice(None),) + (None,) * u.ndim]
    else:
        wd = thermal_weight_derivs(u, beta, order)
    kd = _radial_derivs(ff, phi, u, order)
    out = np.zeros((order + 1,) + u.shape, dtype=complex)
    for j in range(order + 1):
        for i in range(j + 1):
            out[j] += binom(j, i) * wd[i] * kd[j - i]
    return out


def tau_beta(ff: FormFactor, beta: float, phi: float, u):
    """Glued form factor at ``u`` (scalar or array)."""
    scalar = np.ndim(u) == 0
    val = glued_derivs(ff, beta, phi, u, 0)[0]
    return complex(val[0]) if scalar else val


def d_tau_beta(ff: FormFactor, beta: float, phi: float, u, order: int, commutant=False):
    """``order``-th derivative of the glued form factor, ``order`` in 1..3."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    scalar = np.ndim(u) == 0
    val = glued_derivs(ff, beta, phi, u, order, commutant)[order]
    return complex(val[0]) if scalar else val


# ---------------------------------------------------------------------------
# quadrature helpers


def _support_edge(ff: FormFactor) -> float:
    if math.isinf(ff.cutoff):
        return math.inf
    return abs(ff.center) + 12.0 * ff.cutoff


def _piece_edges(beta: float, top: float) -> list:
    """Geometric breakpoints resolving the thermal scale 1/beta and the origin."""
    scale = 1.0 / beta
    edges = [0.0]
    x = min(scale, top) * 1e-6
    while x < top:
        edges.append(x)
        x *= 10.0
    for s in (scale, 2 * scale, 5 * scale):
        if s < top:
            edges.append(s)
    edges.append(top)
    return sorted(set(edges))


def _integrate_pieces(fn, edges, rtol=1e-10):
    total = 0.0
    err = 0.0
    partial = []
    for a, b in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, e = integrate.quad(fn, a, b, limit=200, epsabs=0.0, epsrel=rtol)
        total += val
        err += e
        partial.append(total)
    return total, err, partial


def l2_norm_line(ff: FormFactor, beta: float, phi: float, order: int = 0,
                 commutant: bool = False, rtol: float = 1e-9) -> float:
    """``(angular * int_R |d^j glued|^2 du)^(1/2)``; raises QuadratureError if unconverged."""
    top = _support_edge(ff)
    if math.isinf(top):
        return math.inf

    def pos(u):
        return abs(glued_derivs(ff, beta, phi, u, order, commutant)[order][0]) ** 2

    def neg(u):
        return abs(glued_derivs(ff, beta, phi, -u, order, commutant)[order][0]) ** 2

    edges = _piece_edges(beta, top)
    s1, e1, p1 = _integrate_pieces(pos, edges)
    s2, e2, p2 = _integrate_pieces(neg, edges)
    total = s1 + s2
    if not np.isfinite(total) or (e1 + e2) > max(rtol * 10 * abs(total), 1e-14):
        raise QuadratureError(
            f"L2 quadrature unconverged (value {total:.6g}, error {e1 + e2:.3g})",
            partial_sums=p1 + [s1 + x for x in p2],
        )
    return math.sqrt(ff.angular_factor * total)


def l2_norm_r3(fn, top: float, angular: float = FOUR_PI) -> float:
    """``(angular * int_0^top |fn(u)|^2 u^2 du)^(1/2)``."""
    if math.isinf(top):
        return math.inf
    edges = [0.0, 1e-6 * top, 1e-3 * top, 0.1 * top, top]
    val, err, partial = _integrate_pieces(lambda u: abs(fn(u)) ** 2 * u * u, edges)
    if not np.isfinite(val):
        raise QuadratureError("non-finite quadrature", partial)
    return math.sqrt(angular * val)


# ---------------------------------------------------------------------------
# assumption check


@dataclass
class Check:
    name: str
    passed: bool
    value: float = float("nan")
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, value=float("nan"), detail=""):
        self.checks.append(Check(name, bool(passed), float(value), detail))

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed,
                 "value": None if not np.isfinite(c.value) else c.value, "detail": c.detail}
                for c in self.checks
            ],
        }


def _p_class_ok(p: float) -> bool:
    return p in _IR_CLASSES or p > 2


def validate_a1(spec: ModelSpec) -> ValidationReport:
    """Numerical audit of the smoothness/decay hypotheses on each form factor.

    Never raises for numerical trouble: a failing quadrature becomes a FAIL entry.
    """
    rep = ValidationReport()
    phi = spec.glue_phase
    for a, term in enumerate(spec.couplings):
        ff = term.ff
        tag = f"alpha={a}"
        rep.add(f"{tag}: p in infrared classes", _p_class_ok(ff.p), ff.p)
        top = _support_edge(ff)
        zero = ff.amplitude == 0

        for j in range(4):
            name = f"{tag}: ||d^{j} gt||_R3 finite"
            try:
                val = 0.0 if zero else l2_norm_r3(lambda u, j=j: ff.profile_derivs(u, j)[j], top,
                                                  ff.angular_factor)
                rep.add(name, np.isfinite(val), val)
            except Exception as exc:  # noqa: BLE001 - reported, not raised
                rep.add(name, False, detail=str(exc))
        name = f"{tag}: ||u^2 g||_R3 finite"
        try:
            val = 0.0 if zero else l2_norm_r3(lambda u: u**2 * ff.g(u), top, ff.angular_factor)
            rep.add(name, np.isfinite(val), val)
        except Exception as exc:  # noqa: BLE001
            rep.add(name, False, detail=str(exc))

        for j in range(4):
            name = f"{tag}: ||d^{j} tau(g)||_L2 finite"
            try:
                val = 0.0 if zero else l2_norm_line(ff, spec.beta, phi, j)
                rep.add(name, np.isfinite(val), val)
            except Exception as exc:  # noqa: BLE001
                rep.add(name, False, detail=str(exc))

        if ff.p in (-0.5, 0.5):
            slope = abs(ff.profile_derivs(np.array(0.0), 1)[1])
            rep.add(f"{tag}: d gt(0) = 0", slope <= 1e-12 * max(1.0, abs(ff.amplitude)), slope)
        if ff.p in _IR_CLASSES and not zero:
            gd0 = ff.profile_derivs(np.array(0.0), 2)
            imag = max(abs((np.exp(-1j * ff.phase0) * gd0[j]).imag) for j in range(3))
            rep.add(f"{tag}: e^(-i phase0) d^j gt(0) real", imag <= 1e-12 * max(1.0, abs(ff.amplitude)),
                    imag)

        # continuity of d^j tau at 0 for j = 0, 1, 2 (one-sided values at +-h)
        if not zero:
            h = 1e-7 / spec.beta
            d = glued_derivs(ff, spec.beta, phi, np.array([-h, h]), 2)
            scale = max(1.0, float(np.max(np.abs(d))))
            jump = float(np.max(np.abs(d[:, 1] - d[:, 0])))
            rep.add(f"{tag}: d^j tau(g) continuous at 0 (j<=2)", jump <= 1e-4 * scale, jump)
    return rep


# ---------------------------------------------------------------------------
# scalar functionals


def fgr_value(spec: ModelSpec) -> float:
    """Smallest Fermi-Golden-Rule weight over ordered pairs of distinct levels."""
    E = spec.atom.energies
    best = math.inf
    for m in range(spec.atom.dim):
        for n in range(spec.atom.dim):
            if E[m] == E[n]:
                continue
            bohr = abs(E[m] - E[n])
            amp = sum(t.G[m, n] * complex(t.ff.g(bohr)) for t in spec.couplings)
            ang = spec.couplings[0].ff.angular_factor if spec.couplings else FOUR_PI
            best = min(best, ang * abs(amp) ** 2)
    return 0.0 if math.isinf(best) else float(best)


def c_p_beta(spec: ModelSpec) -> float:
    """``2 sum_a ||G_a|| ||d/du tau(g_a)||_L2``, the relative bound of the derivative field."""
    phi = spec.glue_phase
    total = 0.0
    for t in spec.couplings:
        if t.norm == 0 or t.ff.amplitude == 0:
            continue
        total += 2.0 * t.norm * l2_norm_line(t.ff, spec.beta, phi, 1)
    return total


def gibbs_density(atom: AtomSpec, beta: float) -> np.ndarray:
    if not beta > 0:
        raise ValueError("beta must be positive")
    E = np.asarray(atom.energies)
    w = np.exp(-beta * (E - E[0]))
    return np.diag(w / w.sum())


def gibbs_vector(atom: AtomSpec, beta: float) -> np.ndarray:
    """Unit vector ``sum_j e^{-beta E_j/2} phi_j (x) phi_j`` on ``C^d (x) C^d``.

    Index of ``phi_i (x) phi_j`` is ``i * d + j``.
    """
    d = atom.dim
    E = np.asarray(atom.energies)
    w = np.exp(-0.5 * beta * (E - E[0]))
    v = np.zeros(d * d, dtype=complex)
    v[np.arange(d) * (d + 1)] = w
    return v / np.linalg.norm(v)
