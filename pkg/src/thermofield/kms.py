"""Reference and interacting KMS vectors and their separation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from . import fock
from .fock import BathGrid, BudgetError
from .krylov import KrylovError, expmv_normalized
from .liouvillian import LiouvillianBundle, assemble, atom_operator
from .model import ModelSpec, gibbs_vector


@dataclass
class SweepRecord:
    beta: float
    lam: float
    overlap_distance: float = float("nan")
    kernel_residual: float = float("nan")
    n_expectation: float = float("nan")
    extras: dict = field(default_factory=dict)

    CSV_HEADER = ("beta", "lambda", "overlap_distance", "kernel_residual", "n_expectation")

    def row(self) -> tuple:
        return (self.beta, self.lam, self.overlap_distance, self.kernel_residual, self.n_expectation)


def _fix_phase(psi: np.ndarray, ref: np.ndarray) -> np.ndarray:
    ov = np.vdot(ref, psi)
    if abs(ov) > 0:
        psi = psi * (abs(ov) / ov)
    return psi


def reference_vector(spec: ModelSpec, basis: fock.FockBasis) -> np.ndarray:
    """Atomic Gibbs vector times the Fock vacuum."""
    return np.kron(gibbs_vector(spec.atom, spec.beta), fock.vacuum(basis))


def interacting_kms_vector(bundle: LiouvillianBundle, tol: float = 1e-10, m: int = 30,
                           return_info: bool = False):
    """Unit vector along ``exp(-beta (L0 + lam I_ell) / 2) Omega_ref``.

    The global phase makes the overlap with the reference vector real and
    nonnegative.
    """
    spec = bundle.spec
    ref = reference_vector(spec, bundle.basis)
    if spec.lam == 0:
        return (ref, None) if return_info else ref
    A = (bundle.L0 + spec.lam * bundle.I_ell).tocsr()
    psi, info = expmv_normalized(A, ref, -spec.beta / 2.0, tol=tol, m=m)
    if info.error_estimate > 10 * tol:
        raise KrylovError(f"Krylov residual {info.error_estimate:.3g} above {tol}",
                          info.error_estimate)
    psi = _fix_phase(psi, ref)
    return (psi, info) if return_info else psi


def interacting_kms_vector_dense(bundle: LiouvillianBundle, budget: int = 4000) -> np.ndarray:
    """Dense matrix-exponential oracle for :func:`interacting_kms_vector`."""
    if bundle.dim > budget:
        raise BudgetError(f"dense exponential needs dim <= {budget}", bundle.dim)
    spec = bundle.spec
    ref = reference_vector(spec, bundle.basis)
    A = (bundle.L0 + spec.lam * bundle.I_ell).toarray()
    psi = expm(-spec.beta / 2.0 * A) @ ref
    return _fix_phase(psi / np.linalg.norm(psi), ref)


def kernel_residual(bundle: LiouvillianBundle, psi: np.ndarray) -> float:
    return float(np.linalg.norm(bundle.L_lambda @ psi))


def expectation(op, psi: np.ndarray) -> float:
    return float(np.vdot(psi, op @ psi).real)


def projection_distance(psi: np.ndarray, chi: np.ndarray) -> float:
    """Operator-norm distance of the rank-one projections onto ``psi`` and ``chi``."""
    ov = abs(np.vdot(psi, chi)) / (np.linalg.norm(psi) * np.linalg.norm(chi))
    return math.sqrt(max(0.0, 1.0 - min(1.0, ov) ** 2))


@dataclass
class OverlapDecomposition:
    lhs: float
    excited: float
    thermal: float
    bosons: float

    @property
    def rhs(self) -> float:
        return self.excited + self.thermal + self.bosons


def overlap_decomposition_check(bundle: LiouvillianBundle, psi: np.ndarray) -> OverlapDecomposition:
    """``||P_psi - P_ref||^2`` against ``4<Q> + 2||P_gibbs - P_ground|| + 2<N>``.

    ``Q = 1 - |phi_0><phi_0|`` acts on the physical (left) atom.
    """
    spec = bundle.spec
    d = spec.atom.dim
    ref = reference_vector(spec, bundle.basis)
    Q = np.eye(d)
    Q[0, 0] = 0.0
    excited = 4.0 * expectation(atom_operator(spec, bundle.basis, Q), psi)
    ground = np.zeros(d * d)
    ground[0] = 1.0
    thermal = 2.0 * projection_distance(gibbs_vector(spec.atom, spec.beta), ground)
    bosons = 2.0 * expectation(bundle.N, psi)
    return OverlapDecomposition(projection_distance(psi, ref) ** 2, excited, thermal, bosons)


def measure(bundle: LiouvillianBundle, tol: float = 1e-10) -> SweepRecord:
    spec = bundle.spec
    psi = interacting_kms_vector(bundle, tol=tol)
    ref = reference_vector(spec, bundle.basis)
    return SweepRecord(
        beta=spec.beta, lam=spec.lam,
        overlap_distance=projection_distance(psi, ref),
        kernel_residual=kernel_residual(bundle, psi),
        n_expectation=expectation(bundle.N, psi),
    )


def overlap_sweep(template: ModelSpec, betas: Sequence[float], lambdas: Sequence[float],
                  grid: BathGrid | Callable[[float], BathGrid], n_total_max: int,
                  tol: float = 1e-10) -> list:
    """One :class:`SweepRecord` per ``(beta, lam)``; failures land in ``extras``.

    ``grid`` may depend on beta (thermal scale) through a callable.
    """
    records = []
    for beta in betas:
        g = grid(beta) if callable(grid) else grid
        try:
            basis = fock.enumerate_basis(g.M, n_total_max)
            base = assemble(template.replace(beta=beta, lam=0.0), basis, g)
        except Exception as exc:  # noqa: BLE001 - recorded per point
            records.extend(SweepRecord(beta, lam, extras={"error": repr(exc)}) for lam in lambdas)
            continue
        for lam in lambdas:
            try:
                records.append(measure(base.with_lambda(lam), tol))
            except Exception as exc:  # noqa: BLE001
                records.append(SweepRecord(beta, lam, extras={"error": repr(exc)}))
    return records
