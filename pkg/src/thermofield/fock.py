"""Discretized glued one-boson space and the truncated bosonic Fock space.

Operators are ``scipy.sparse`` CSR matrices in the lexicographic occupation
basis produced by :func:`thermofield.kernels.enumerate_states`. The vacuum is
always basis index 0.
"""
from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from . import kernels

DEFAULT_BUDGET = int(os.environ.get("THERMOFIELD_DIM_BUDGET", 3_000_000))


class BudgetError(MemoryError):
    def __init__(self, message, dim):
        super().__init__(message)
        self.dim = int(dim)


@dataclass(frozen=True, eq=False)
class BathGrid:
    modes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.modes, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if u.shape != w.shape or u.ndim != 1:
            raise ValueError("modes and weights must be 1-d of equal length")
        if np.any(u == 0):
            raise ValueError("zero mode is excluded from bath grids")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if np.any(np.diff(u) <= 0):
            raise ValueError("modes must be strictly increasing")
        u.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "modes", u)
        object.__setattr__(self, "weights", w)

    @property
    def M(self) -> int:
        return self.modes.size

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.modes, -self.modes[::-1], rtol=0, atol=1e-14)
                    and np.allclose(self.weights, self.weights[::-1], rtol=1e-14))

    @property
    def spacing(self) -> float:
        """Largest cell width (sets the recurrence time ``2 pi / du``)."""
        return float(self.weights.max())

    def positive(self) -> "BathGrid":
        keep = self.modes > 0
        return BathGrid(self.modes[keep], self.weights[keep])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.modes.astype("<f8").tobytes())
        h.update(self.weights.astype("<f8").tobytes())
        return h.hexdigest()[:16]


def _check_symmetric(grid: BathGrid) -> BathGrid:
    if grid.M % 2 or not grid.is_symmetric:
        raise ValueError("bath grid must be symmetric with an even number of modes")
    return grid


def midpoint_grid(u_max: float, M: int, refine: int = 0) -> BathGrid:
    """Symmetric midpoint grid on ``[-u_max, u_max]`` with ``M`` modes.

    ``refine > 0`` replaces the innermost cell ``(0, du]`` on each side by
    ``refine + 1`` dyadic cells ``(du/2^refine, ..., du/2, du]`` (plus the
    innermost ``(0, du/2^refine]``), resolving the infrared region.
    """
    if M < 2 or M % 2:
        raise ValueError("M must be even and >= 2")
    half = M // 2
    du = u_max / half
    edges = np.arange(half + 1) * du
    if refine > 0:
        inner = du / 2.0 ** np.arange(refine, 0, -1)
        edges = np.concatenate([[0.0], inner, edges[1:]])
    mids = 0.5 * (edges[1:] + edges[:-1])
    widths = np.diff(edges)
    return _check_symmetric(BathGrid(np.concatenate([-mids[::-1], mids]),
                                     np.concatenate([widths[::-1], widths])))


def resonant_grid(bohr: float, M: int, k0: int | None = None) -> BathGrid:
    """Uniform symmetric grid whose mode ``k0`` sits exactly on ``bohr``.

    Modes are ``+-(k - 1/2) du``; choosing ``du = bohr / (k0 - 1/2)`` makes
    ``bohr`` a grid point, the resonance the golden-rule decay needs.
    """
    half = M // 2
    if k0 is None:
        k0 = max(1, half // 3)
    if not 1 <= k0 <= half:
        raise ValueError("resonant index outside the grid")
    du = bohr / (k0 - 0.5)
    return midpoint_grid(du * half, M)


# ---------------------------------------------------------------------------
# Fock basis


@dataclass(frozen=True, eq=False)
class FockBasis:
    mode_count: int
    n_total_max: int
    states: np.ndarray

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def index(self, occupation) -> int:
        occ = np.asarray(occupation, dtype=np.int64).reshape(1, -1)
        if occ.shape[1] != self.mode_count or occ.min() < 0 or occ.sum() > self.n_total_max:
            raise KeyError(f"occupation {tuple(occ[0])} not in basis")
        return int(kernels.rank_states(occ, self.n_total_max)[0])

    @property
    def totals(self) -> np.ndarray:
        return self.states.sum(axis=1)

    def ladder(self):
        if not hasattr(self, "_ladder"):
            object.__setattr__(self, "_ladder", kernels.ladder_table(self.states, self.n_total_max))
        return self._ladder


def basis_dimension(M: int, n_total_max: int) -> int:
    return math.comb(M + n_total_max, n_total_max)


def enumerate_basis(M: int, n_total_max: int, budget: int | None = None) -> FockBasis:
    if M < 1 or n_total_max < 0:
        raise ValueError("need M >= 1 and n_total_max >= 0")
    budget = DEFAULT_BUDGET if budget is None else budget
    dim = basis_dimension(M, n_total_max)
    if dim > budget:
        raise BudgetError(f"Fock dimension {dim} exceeds budget {budget}", dim)
    states = kernels.enumerate_states(M, n_total_max)
    states.setflags(write=False)
    return FockBasis(M, n_total_max, states)


# ---------------------------------------------------------------------------
# operators


def creation(basis: FockBasis, h) -> sp.csr_matrix:
    """``a*(h) = sum_k h_k a_k^dagger`` (linear in ``h``), truncated."""
    h = np.asarray(h, dtype=complex)
    if h.shape != (basis.mode_count,):
        raise ValueError("one-boson vector length must equal the mode count")
    rows, cols, modes, vals = basis.ladder()
    data = vals * h[modes]
    n = basis.dim
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def field_ops(basis: FockBasis, h):
    """``(a*(h), a(h), phi(h))`` with ``phi = (a* + a)/sqrt 2`` and ``a(h) = a*(h)^dagger``."""
    a_dag = creation(basis, h)
    a = a_dag.conj().T.tocsr()
    phi = ((a_dag + a) / math.sqrt(2.0)).tocsr()
    for m in (a_dag, a, phi):
        m.sort_indices()
    return a_dag, a, phi


def field(basis: FockBasis, h) -> sp.csr_matrix:
    return field_ops(basis, h)[2]


def dgamma(basis: FockBasis, multiplier) -> sp.csr_matrix:
    """Second quantization of a multiplication operator: ``diag(sum_j n_j m_j)``."""
    m = np.asarray(multiplier, dtype=float)
    if m.shape != (basis.mode_count,):
        raise ValueError("multiplier length must equal the mode count")
    return sp.diags(basis.states @ m, format="csr").astype(complex)


def number_operator(basis: FockBasis) -> sp.csr_matrix:
    return dgamma(basis, np.ones(basis.mode_count))


def vacuum(basis: FockBasis) -> np.ndarray:
    v = np.zeros(basis.dim, dtype=complex)
    v[0] = 1.0
    return v


def discretize(f, grid: BathGrid, angular_factor: float = 4 * math.pi) -> np.ndarray:
    """``coeffs_j = sqrt(angular * w_j) f(u_j)``; ``f`` is vectorised over the grid."""
    vals = np.asarray(f(grid.modes), dtype=complex)
    if vals.shape != grid.modes.shape:
        vals = np.broadcast_to(vals, grid.modes.shape).astype(complex)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        u = grid.modes[np.flatnonzero(bad)[0]]
        raise ValueError(f"non-finite function value at grid point u={u!r}")
    return np.sqrt(angular_factor * grid.weights) * vals


def weyl_expectation_check(basis: FockBasis, h, budget: int = 2000):
    """``(Re <Omega, exp(i phi(h)) Omega>, exp(-||h||^2 / 4))``."""
    if basis.dim > budget:
        raise BudgetError(f"dense exponential needs dim <= {budget}, got {basis.dim}", basis.dim)
    h = np.asarray(h, dtype=complex)
    phi = field(basis, h).toarray()
    lhs = float(np.real(expm(1j * phi)[0, 0]))
    rhs = math.exp(-float(np.vdot(h, h).real) / 4.0)
    return lhs, rhs
