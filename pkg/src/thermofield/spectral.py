"""Spectral analysis near zero: level-shift operator, conjugate operator A0,
commutator form B, virial identity, Feshbach map and the positive-commutator probe.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fock
from .fock import BudgetError
from .kms import expectation, interacting_kms_vector
from .liouvillian import LiouvillianBundle
from .model import ModelSpec, c_p_beta, fgr_value, gibbs_vector, glued_derivs


class EigenError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    vectors: np.ndarray  # columns
    residuals: np.ndarray


def _finish(L, vals, vecs, tol, trace):
    order = np.argsort(np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    res = np.linalg.norm(L @ vecs - vecs * vals, axis=0)
    scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
    if np.any(res > tol * scale):
        raise EigenError(f"eigen-residual {res.max():.3g} above tolerance {tol:g}", trace)
    return EigenResult(vals, vecs, res)


def low_spectrum(L, count: int, tol: float = 1e-9, dense_limit: int = 2000,
                 force: str | None = None) -> EigenResult:
    """The ``count`` eigenpairs of Hermitian ``L`` closest to 0.

    Dense ``eigh`` up to ``dense_limit``; above it shift-invert Lanczos at a
    small negative shift (0 itself is typically an exact eigenvalue).
    """
    n = L.shape[0]
    count = min(count, n)
    method = force or ("dense" if n <= dense_limit else "shift-invert")
    if method == "dense":
        A = L.toarray() if sp.issparse(L) else np.asarray(L)
        vals, vecs = np.linalg.eigh(A)
        idx = np.argsort(np.abs(vals), kind="stable")[:count]
        return _finish(L, vals[idx], vecs[:, idx], tol, ["dense"])
    trace = []
    sigma = -1e-7
    for attempt in range(3):
        try:
            vals, vecs = spla.eigsh(sp.csc_matrix(L), k=count, sigma=sigma, which="LM",
                                    tol=tol * 1e-2, maxiter=20 * n)
            return _finish(L, vals, vecs, tol, trace)
        except (spla.ArpackNoConvergence, RuntimeError, EigenError) as exc:
            trace.append(f"sigma={sigma:g}: {exc}")
            sigma *= 10
    raise EigenError("shift-invert Lanczos did not converge", trace)


# ---------------------------------------------------------------------------
# the projection onto ker L0 restricted to the atom-diagonal vacuum sector


def pi_indices(spec: ModelSpec, basis: fock.FockBasis) -> np.ndarray:
    d = spec.atom.dim
    return (np.arange(d) * (d + 1)) * basis.dim


def pi_projection(bundle: LiouvillianBundle) -> sp.csr_matrix:
    idx = pi_indices(bundle.spec, bundle.basis)
    diag = np.zeros(bundle.dim, dtype=complex)
    diag[idx] = 1.0
    return sp.diags(diag, format="csr")


def regularized_lso(bundle: LiouvillianBundle, epsilon: float) -> np.ndarray:
    """``Pi I eps/(L0^2 + eps^2) I Pi`` as a d x d matrix in the basis phi_j (x) phi_j (x) Omega."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    X = bundle.I[:, pi_indices(bundle.spec, bundle.basis)].toarray()
    l0 = bundle.L0.diagonal().real
    R = epsilon / (l0 * l0 + epsilon * epsilon)
    K = X.conj().T @ (R[:, None] * X)
    return 0.5 * (K + K.conj().T)


def richardson(values, ratio: float = 2.0):
    """Eliminate the O(h) and O(h^2) terms from ``values`` at ``h, h/2, h/4``."""
    k_h, k_h2, k_h4 = values
    if ratio != 2.0:
        raise ValueError("only halving sequences are supported")
    return (8.0 * k_h4 - 6.0 * k_h2 + k_h) / 3.0


@dataclass
class Gamma0Result:
    matrix: np.ndarray
    gap: float
    lower_bound: float
    kernel_vector: np.ndarray


def _glued_at(spec: ModelSpec, u: float, commutant: bool) -> np.ndarray:
    phi = spec.glue_phase
    return np.array([complex(glued_derivs(t.ff, spec.beta, phi, u, 0, commutant)[0][0])
                     for t in spec.couplings])


def explicit_lower_bound(spec: ModelSpec) -> float:
    """``min_{m != n} (E_m - E_n)^2 Z / |e^{-beta E_m} - e^{-beta E_n}| * 4 pi |sum G g|^2``."""
    E = np.asarray(spec.atom.energies)
    boltz = np.exp(-spec.beta * (E - E[0]))
    Z = boltz.sum()
    best = math.inf
    for m in range(E.size):
        for n in range(E.size):
            if m == n:
                continue
            bohr = abs(E[m] - E[n])
            amp = sum(t.G[m, n] * complex(t.ff.g(bohr)) for t in spec.couplings)
            ang = spec.couplings[0].ff.angular_factor
            val = (E[m] - E[n]) ** 2 * Z / abs(boltz[m] - boltz[n]) * ang * abs(amp) ** 2
            best = min(best, val)
    return float(best)


def gamma0_matrix(spec: ModelSpec) -> Gamma0Result:
    """Level-shift operator on Ran Pi: the ``eps -> 0`` limit of :func:`regularized_lso`.

    With ``f_{k,mn}(u) = (sum_a G_mk T_a(u) [n=k] - conj(G_nk) S_a(u) [m=k]) / sqrt 2``,
    ``T = tau(g)``, ``S = e^{-beta u/2} tau(g)`` evaluated at ``u = E_n - E_m``::

        Gamma0_jk = pi * angular * sum_{m != n} conj(f_{j,mn}) f_{k,mn}

    (diagonal m = n terms vanish because ``S(0) = T(0)``).
    """
    d = spec.atom.dim
    E = np.asarray(spec.atom.energies)
    ang = spec.couplings[0].ff.angular_factor if spec.couplings else 4 * math.pi
    Gs = np.array([t.G for t in spec.couplings]) if spec.couplings else np.zeros((0, d, d))
    Gam = np.zeros((d, d), dtype=complex)
    for m in range(d):
        for n in range(d):
            if m == n:
                continue
            u = E[n] - E[m]
            T = _glued_at(spec, u, False)
            S = _glued_at(spec, u, True)
            f = np.zeros(d, dtype=complex)
            f[n] += np.sum(Gs[:, m, n] * T)
            f[m] -= np.sum(np.conj(Gs[:, n, m]) * S)
            f /= math.sqrt(2.0)
            Gam += np.outer(f.conj(), f)
    Gam *= math.pi * ang
    Gam = 0.5 * (Gam + Gam.conj().T)
    kv = gibbs_vector(spec.atom, spec.beta)[np.arange(d) * (d + 1)]
    gap = gap_on_complement(Gam, kv)
    if fgr_value(spec) == 0:
        warnings.warn("Fermi Golden Rule condition fails; level-shift gap is 0", RuntimeWarning)
        gap = 0.0
    return Gamma0Result(Gam, gap, explicit_lower_bound(spec) if spec.couplings else 0.0, kv)


def gap_on_complement(K: np.ndarray, v: np.ndarray) -> float:
    """Smallest eigenvalue of ``K`` compressed to the orthogonal complement of ``v``."""
    v = v / np.linalg.norm(v)
    Q = sla.null_space(v.conj()[None, :])
    vals = np.linalg.eigvalsh(Q.conj().T @ K @ Q)
    return float(vals[0])


# ---------------------------------------------------------------------------
# positive-commutator machinery


@dataclass(frozen=True)
class PCParameters:
    theta: float
    epsilon: float
    delta: float
    m: float = 0.0
    nu: float = 1.0
    e: float = 0.6
    t: float = 0.1

    @property
    def eta(self) -> float:
        return self.e - self.t


def choose_pc_parameters(lam: float, nu: float = 1.0, e: float = 0.6, t: float = 0.1,
                         gamma0: float = 0.0) -> PCParameters:
    """``eps = nu^-3 |lam'|^e``, ``theta = |lam'|^t``, ``delta = theta lam^2 gamma0 / eps``
    with ``lam' = nu^{9/2} lam``."""
    if not 0 < t:
        raise ValueError("need t > 0")
    if not t < e:
        raise ValueError("need t < e")
    if not e < 1:
        raise ValueError("need e < 1")
    if not t > 3 * e - 2:
        raise ValueError("need t > 3e - 2")
    if nu < 1:
        raise ValueError("need nu >= 1")
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    lp = abs(nu ** 4.5 * lam)
    eps = nu ** -3 * lp ** e
    theta = lp ** t
    delta = theta * lam * lam * gamma0 / eps
    return PCParameters(theta=theta, epsilon=eps, delta=delta, nu=nu, e=e, t=t)


def _rbar2(bundle: LiouvillianBundle, epsilon: float) -> np.ndarray:
    l0 = bundle.L0.diagonal().real
    r = 1.0 / (l0 * l0 + epsilon * epsilon)
    r[pi_indices(bundle.spec, bundle.basis)] = 0.0
    return r


def build_A0(bundle: LiouvillianBundle, params: PCParameters) -> sp.csr_matrix:
    """``A0 = i theta lam (Pi I Rbar^2 - Rbar^2 I Pi)`` (Hermitian)."""
    lam = bundle.spec.lam
    n = bundle.dim
    if lam == 0:
        return sp.csr_matrix((n, n), dtype=complex)
    P = pi_projection(bundle)
    R = sp.diags(_rbar2(bundle, params.epsilon))
    X = (P @ bundle.I @ R).tocsr()
    A0 = (1j * params.theta * lam * (X - X.conj().T)).tocsr()
    A0.sort_indices()
    return A0


def commutator(A, B):
    return (A @ B - B @ A).tocsr()


def build_B(bundle: LiouvillianBundle, params: PCParameters) -> sp.csr_matrix:
    """``B = N + lam I1 + i [L_lam, A0]``."""
    L = bundle.L_lambda
    A0 = build_A0(bundle, params)
    B = bundle.N + bundle.spec.lam * bundle.I1 + 1j * commutator(L, A0)
    B = B.tocsr()
    B.sort_indices()
    return B


def derivative_generator(grid: fock.BathGrid) -> np.ndarray:
    """Central-difference ``i d/du`` on a uniform symmetric grid (Hermitian M x M)."""
    u = grid.modes
    du = np.diff(u)
    if not np.allclose(du, du[0], rtol=1e-10):
        raise ValueError("dilation generator needs a uniform grid")
    M = u.size
    S = np.diag(np.ones(M - 1), 1)
    return 1j * (S - S.T) / (2.0 * du[0])


def second_quantize(basis: fock.FockBasis, a: np.ndarray) -> sp.csr_matrix:
    """``dGamma(a) = sum_jk a_jk a_j^dagger a_k`` for a one-boson matrix ``a``."""
    M = basis.mode_count
    out = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    e = np.eye(M)
    for k in range(M):
        col = a[:, k]
        if not np.any(col):
            continue
        lower = fock.creation(basis, e[k]).conj().T
        out = out + fock.creation(basis, col) @ lower
    return out.tocsr()


@dataclass
class VirialResult:
    b_expectation: float
    n_bound_ratio: float
    eigen_residual: float
    truncation_indicator: float
    commutator_defect: float
    top_weight: float
    conjugate_norm: float


def virial_check(bundle: LiouvillianBundle, params: PCParameters, psi: np.ndarray,
                 c_value: float | None = None) -> VirialResult:
    """``<psi, B psi>`` and ``||N^{1/2} psi|| / (c(p,beta) |lam| ||psi||)`` plus diagnostics.

    Diagnostics (uniform grids only): ``eigen_residual = ||(L - <L>) psi||``;
    ``commutator_defect = <psi, D psi>`` with ``D = N + lam I1 - i[L, dGamma(i d/du)]``,
    the discretization error of the identity ``i[L, dGamma(i d/du)] = N + lam I1``;
    ``top_weight`` = weight of ``psi`` in the highest occupation sector;
    ``truncation_indicator = |commutator_defect| + top_weight``. For any unit
    ``psi``, ``|b - D| <= 2 eigen_residual ||(dGamma(a) + A0) psi||``.
    """
    spec = bundle.spec
    nrm = float(np.linalg.norm(psi))
    psi = psi / nrm
    B = build_B(bundle, params)
    b = expectation(B, psi)
    nexp = expectation(bundle.N, psi)
    c_val = c_p_beta(spec) if c_value is None else c_value
    denom = c_val * abs(spec.lam)
    ratio = 0.0 if nexp <= 0 or denom == 0 else math.sqrt(nexp) / denom
    L = bundle.L_lambda
    Lpsi = L @ psi
    mu = float(np.vdot(psi, Lpsi).real)
    res = float(np.linalg.norm(Lpsi - mu * psi))
    d = spec.atom.dim
    try:
        dga = sp.kron(sp.identity(d * d), second_quantize(bundle.basis,
                                                          derivative_generator(bundle.grid)),
                      format="csr")
        D = bundle.N + spec.lam * bundle.I1 - 1j * commutator(L, dga)
        defect = expectation(D, psi)
        X = dga + build_A0(bundle, params)
        xnorm = float(np.linalg.norm(X @ psi))
    except ValueError:
        defect, xnorm = float("nan"), float("nan")
    top = bundle.basis.totals == bundle.basis.n_total_max
    top_full = np.tile(top, d * d)
    top_weight = float(np.sum(np.abs(psi[top_full]) ** 2)) if bundle.basis.n_total_max > 0 else 0.0
    return VirialResult(b, ratio, res, abs(defect) + top_weight, defect, top_weight, xnorm)


def kernel_vector(bundle: LiouvillianBundle, threshold: float | None = None,
                  dense_limit: int = 6000):
    """Kernel vector of ``L_lam`` at finite truncation and its eigen data.

    A discrete bath makes the near-zero spectrum of ``L_lam`` highly degenerate
    (pairs of bosons at ``+u`` and ``-u`` cost no energy). The kernel vector is
    the normalized projection of the interacting KMS vector onto the
    eigenvectors with ``|eigenvalue| <= threshold`` (default: ``10 |lam|^2 / 100``
    floored at 1e-8), which isolates the equilibrium direction inside the cluster.
    """
    if bundle.dim > dense_limit:
        raise BudgetError(f"dense kernel extraction needs dim <= {dense_limit}", bundle.dim)
    L = bundle.L_lambda.toarray()
    vals, vecs = np.linalg.eigh(L)
    lam = bundle.spec.lam
    thr = threshold if threshold is not None else max(1e-8, 0.1 * lam * lam)
    sel = np.abs(vals) <= thr
    omega = interacting_kms_vector(bundle)
    V = vecs[:, sel]
    psi = V @ (V.conj().T @ omega)
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        raise EigenError("no eigenvectors inside the kernel threshold")
    return psi / nrm, vals[sel]


# ---------------------------------------------------------------------------
# Feshbach map


def _range_basis(proj: np.ndarray):
    vals, vecs = np.linalg.eigh(0.5 * (proj + proj.conj().T))
    keep = vals > 0.5
    return vecs[:, keep], vecs[:, ~keep]


def feshbach_map(M, proj, m: float) -> np.ndarray:
    """``P (M - M Pbar (Pbar M Pbar - m)^{-1} Pbar M) P`` as a matrix on Ran P."""
    M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=complex)
    proj = proj.toarray() if sp.issparse(proj) else np.asarray(proj, dtype=complex)
    P, Q = _range_basis(proj)
    top = P.conj().T @ M @ P
    if Q.shape[1] == 0:
        return top
    block = Q.conj().T @ M @ Q - m * np.eye(Q.shape[1])
    smin = np.linalg.svd(block, compute_uv=False)[-1]
    if smin <= 1e-10:
        raise np.linalg.LinAlgError(
            f"complement block is near-singular (smallest singular value {smin:.3g})")
    return top - (P.conj().T @ M @ Q) @ np.linalg.solve(block, Q.conj().T @ M @ P)


# ---------------------------------------------------------------------------
# positivity probe


@dataclass
class ProbeResult:
    min_quadratic_form: float
    gap_prediction: float
    pc_form: float
    subspace_dim: int
    gamma0: float


def pc_positivity_probe(bundle: LiouvillianBundle, params: PCParameters,
                        window=(-0.5, 0.5), gamma0: float | None = None,
                        dense_limit: int = 6000) -> ProbeResult:
    """Minimum of ``B + delta P_Omega`` on the spectral window of ``L_lam``, restricted
    to eigenvectors with ``<N + 1> <= nu^2`` and orthogonal to the KMS vector."""
    spec = bundle.spec
    lo, hi = window
    E = np.asarray(spec.atom.energies)
    bohr = np.abs(E[:, None] - E[None, :])[~np.eye(E.size, dtype=bool)]
    if np.any((bohr > lo) & (bohr < hi)) or not lo < 0 < hi:
        raise ValueError("window must meet the atomic Liouvillian spectrum only at 0")
    if bundle.dim > dense_limit:
        raise BudgetError(f"dense probe needs dim <= {dense_limit}", bundle.dim)
    g0 = gamma0_matrix(spec).gap if gamma0 is None else gamma0
    vals, vecs = np.linalg.eigh(bundle.L_lambda.toarray())
    inside = (vals > lo) & (vals < hi)
    V = vecs[:, inside]
    nvals = np.real(np.einsum("ij,ij->j", V.conj(), bundle.N @ V)) + 1.0
    V = V[:, nvals <= params.nu ** 2]
    omega = interacting_kms_vector(bundle)
    V = V - np.outer(omega, omega.conj() @ V)
    if V.shape[1] == 0:
        raise EigenError("probe subspace is empty")
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    U = U[:, s > 1e-8]
    if U.shape[1] == 0:
        raise EigenError("probe subspace is empty after removing the KMS direction")
    B = build_B(bundle, params)
    Bc = U.conj().T @ (B @ U)
    Bc += params.delta * np.outer(U.conj().T @ omega, omega.conj() @ U)
    qmin = float(np.linalg.eigvalsh(0.5 * (Bc + Bc.conj().T))[0])
    lam = spec.lam
    pred = params.theta * lam * lam * g0 / (4.0 * params.epsilon)
    eta = params.eta
    pc = abs(lam) ** (2 - eta) * params.nu ** (3 - 4.5 * eta) * g0
    return ProbeResult(qmin, pred, pc, U.shape[1], g0)
