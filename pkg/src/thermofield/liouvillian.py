"""Standard Liouvillian ``L = L0 + lam I`` and companions on C^d (x) C^d (x) F.

Full index of ``phi_i (x) phi_j (x) |n>`` is ``(i * d + j) * D + n`` where ``D`` is
the Fock dimension, i.e. operators are ``kron(left atom, right atom, field)``.
The right (commutant) copy of the atom carries ``C G C``, which in the energy
eigenbasis is just the entrywise conjugate of ``G``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fock
from .fock import BathGrid, BudgetError, FockBasis
from .model import ModelSpec, glued_derivs


@dataclass(frozen=True, eq=False)
class LiouvillianBundle:
    L0: sp.csr_matrix
    I: sp.csr_matrix
    I_ell: sp.csr_matrix
    I1: sp.csr_matrix
    N: sp.csr_matrix
    spec: ModelSpec
    basis: FockBasis
    grid: BathGrid

    @property
    def dim(self) -> int:
        return self.L0.shape[0]

    @property
    def lam(self) -> float:
        return self.spec.lam

    @property
    def L_lambda(self) -> sp.csr_matrix:
        return (self.L0 + self.spec.lam * self.I).tocsr()

    def with_lambda(self, lam: float) -> "LiouvillianBundle":
        return LiouvillianBundle(self.L0, self.I, self.I_ell, self.I1, self.N,
                                 self.spec.replace(lam=lam), self.basis, self.grid)


def hermiticity_defect(A) -> float:
    """``max |A - A^dagger| / max |A|`` (0 for the zero matrix)."""
    A = sp.csr_matrix(A)
    scale = abs(A).max() if A.nnz else 0.0
    if scale == 0:
        return 0.0
    return float(abs(A - A.conj().T).max() / scale)


def _kron3(a, b, c) -> sp.csr_matrix:
    out = sp.kron(sp.kron(sp.csr_matrix(a), sp.csr_matrix(b), format="csr"), c, format="csr")
    out.sort_indices()
    return out


def _one_boson_vectors(spec: ModelSpec, grid: BathGrid, order: int):
    """Per coupling term, the grid vectors of the order-th derivative of the
    glued function and of its commutant partner ``e^{-beta u/2}`` times it."""
    phi = spec.glue_phase
    out = []
    for term in spec.couplings:
        ff = term.ff
        left = fock.discretize(
            lambda u: glued_derivs(ff, spec.beta, phi, u, order)[order], grid, ff.angular_factor)
        right = fock.discretize(
            lambda u: glued_derivs(ff, spec.beta, phi, u, order, commutant=True)[order],
            grid, ff.angular_factor)
        out.append((term.G, left, right))
    return out


def _interaction(spec, basis, grid, order=0, left_only=False) -> sp.csr_matrix:
    d = spec.atom.dim
    eye = np.eye(d)
    n = d * d * basis.dim
    total = sp.csr_matrix((n, n), dtype=complex)
    for G, h1, h2 in _one_boson_vectors(spec, grid, order):
        total = total + _kron3(G, eye, fock.field(basis, h1))
        if not left_only:
            total = total - _kron3(eye, np.conj(G), fock.field(basis, h2))
    total = total.tocsr()
    total.sum_duplicates()
    total.sort_indices()
    return total


def build_L0(spec: ModelSpec, basis: FockBasis, grid: BathGrid) -> sp.csr_matrix:
    E = np.asarray(spec.atom.energies)
    atomic = (E[:, None] - E[None, :]).ravel()
    field_part = basis.states @ grid.modes
    diag = (atomic[:, None] + field_part[None, :]).ravel()
    return sp.diags(diag.astype(complex), format="csr")


def build_I(spec, basis, grid) -> sp.csr_matrix:
    return _interaction(spec, basis, grid)


def build_I_ell(spec, basis, grid) -> sp.csr_matrix:
    """First summand of ``I`` only (the left, non-commutant part)."""
    return _interaction(spec, basis, grid, left_only=True)


def build_I1(spec, basis, grid) -> sp.csr_matrix:
    """``I`` with every one-boson function replaced by its u-derivative."""
    return _interaction(spec, basis, grid, order=1)


def build_N(spec, basis) -> sp.csr_matrix:
    d = spec.atom.dim
    return sp.kron(sp.identity(d * d, format="csr"), fock.number_operator(basis), format="csr")


def assemble(spec: ModelSpec, basis: FockBasis, grid: BathGrid) -> LiouvillianBundle:
    if grid.M != basis.mode_count:
        raise ValueError("grid and basis mode counts differ")
    return LiouvillianBundle(
        L0=build_L0(spec, basis, grid),
        I=build_I(spec, basis, grid),
        I_ell=build_I_ell(spec, basis, grid),
        I1=build_I1(spec, basis, grid),
        N=build_N(spec, basis),
        spec=spec, basis=basis, grid=grid,
    )


def build(spec: ModelSpec, grid: BathGrid, n_total_max: int) -> LiouvillianBundle:
    return assemble(spec, fock.enumerate_basis(grid.M, n_total_max), grid)


def build_zero_temperature_hamiltonian(spec: ModelSpec, basis: FockBasis,
                                       grid_positive: BathGrid) -> sp.csr_matrix:
    """``H = H_at (x) 1 + 1 (x) dGamma(u) + lam sum_a G_a (x) phi(g_a)`` on C^d (x) F.

    The radial measure ``u^2 du`` is absorbed by discretizing ``u g(u)``.
    """
    if np.any(grid_positive.modes <= 0):
        raise ValueError("zero-temperature Hamiltonian needs a positive-frequency grid")
    d = spec.atom.dim
    H = sp.kron(sp.csr_matrix(spec.atom.hamiltonian), sp.identity(basis.dim), format="csr")
    H = H + sp.kron(sp.identity(d), fock.dgamma(basis, grid_positive.modes), format="csr")
    for term in spec.couplings:
        h = fock.discretize(lambda u, ff=term.ff: u * ff.g(u), grid_positive, term.ff.angular_factor)
        H = H + spec.lam * sp.kron(sp.csr_matrix(term.G), fock.field(basis, h), format="csr")
    H = H.tocsr().astype(complex)
    H.sort_indices()
    return H


def relative_bound_check(bundle: LiouvillianBundle, budget: int = 4000) -> float:
    """Largest singular value of ``I (N + 1)^{-1/2}``."""
    if bundle.dim > budget:
        raise BudgetError(f"dense norm needs dim <= {budget}, got {bundle.dim}", bundle.dim)
    n = bundle.N.diagonal().real
    X = (bundle.I @ sp.diags(1.0 / np.sqrt(n + 1.0))).toarray()
    if not np.any(X):
        return 0.0
    return float(np.linalg.norm(X, 2))


def weighted_norm(op: sp.spmatrix, N: sp.spmatrix, budget: int = 4000) -> float:
    """Largest singular value of ``op (N + 1)^{-1/2}`` for any field-type operator."""
    if op.shape[0] > budget:
        raise BudgetError(f"dense norm needs dim <= {budget}, got {op.shape[0]}", op.shape[0])
    n = N.diagonal().real
    X = (op @ sp.diags(1.0 / np.sqrt(n + 1.0))).toarray()
    return float(np.linalg.norm(X, 2)) if np.any(X) else 0.0


def atom_operator(spec: ModelSpec, basis: FockBasis, A, side: str = "left") -> sp.csr_matrix:
    """Embed a d x d atomic matrix on the left (physical) or right copy."""
    d = spec.atom.dim
    eye = np.eye(d)
    a, b = (A, eye) if side == "left" else (eye, A)
    return _kron3(a, b, sp.identity(basis.dim, format="csr", dtype=complex))


SQRT2 = math.sqrt(2.0)
