"""Lanczos approximation of ``exp(t A) v`` for Hermitian sparse ``A``.

``t`` may be real (imaginary-time / Boltzmann factors) or imaginary (unitary
propagation). The step size adapts so that the a-posteriori error estimate

    err ~ beta_m |e_m^T exp(dt T_m) e_1|

stays below ``tol`` times the step's share of the total interval. The
propagated vector is kept normalized and the accumulated log-norm is tracked
separately, so large ``|t| ||A||`` does not overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal


class KrylovError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass
class KrylovInfo:
    steps: int
    matvecs: int
    error_estimate: float
    log_norm: float


def _lanczos(A, v, m):
    """Up to ``m`` Lanczos steps with full reorthogonalization (unit ``v``)."""
    n = v.size
    m = min(m, n)
    V = np.empty((m + 1, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v
    k = 0
    for j in range(m):
        w = A @ V[j]
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j] - (beta[j - 1] * V[j - 1] if j else 0.0)
        # second pass of Gram-Schmidt keeps the basis orthonormal to rounding
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        k = j + 1
        if beta[j] <= 1e-14 * max(1.0, abs(alpha[j])):
            beta[j] = 0.0
            break
        V[j + 1] = w / beta[j]
    return V[: k + 1], alpha[:k], beta[:k], k


def _exp_tridiag(alpha, beta, z):
    """``exp(z T) e_1`` for the Lanczos tridiagonal, as ``(coeffs, log_scale)``."""
    k = alpha.size
    if k == 1:
        theta, S = alpha.copy(), np.ones((1, 1))
    else:
        theta, S = eigh_tridiagonal(alpha, beta[: k - 1])
    expo = z * theta
    shift = float(np.max(expo.real))
    return S @ (np.exp(expo - shift) * S[0]), shift


def _propagate(A, v, t, tol, m, m_max, max_steps):
    """Returns ``(unit vector, log of its norm, info)``."""
    nrm = float(np.linalg.norm(v))
    if nrm == 0 or t == 0:
        return v.copy(), 0.0, KrylovInfo(0, 0, 0.0, 0.0)
    m = max(2, min(int(m), m_max))
    t = complex(t)
    T = abs(t)
    direction = t / T
    cur = v / nrm
    log_norm = math.log(nrm)
    done = 0.0
    dt = T
    steps = matvecs = 0
    err_total = 0.0
    while T - done > 1e-15 * T:
        V, alpha, beta, k = _lanczos(A, cur, m)
        matvecs += k
        happy = beta[k - 1] == 0.0 or k == cur.size
        while True:
            h = min(dt, T - done)
            c, shift = _exp_tridiag(alpha, beta, direction * h)
            err = 0.0 if happy else beta[k - 1] * abs(c[-1]) / np.linalg.norm(c)
            target = tol * (h / T)
            if err <= target:
                break
            dt = h * max(0.1, 0.9 * (target / err) ** (1.0 / k))
            if dt < 1e-12 * T or dt == 0.0:
                raise KrylovError(f"Krylov step size collapsed; estimated error {err:.3g}", err)
        nxt = V[:k].T @ c
        nn = float(np.linalg.norm(nxt))
        cur = nxt / nn
        log_norm += shift + math.log(nn)
        done += h
        err_total += err
        steps += 1
        if steps > max_steps:
            raise KrylovError("too many Krylov steps", err_total)
        if err < 0.1 * target:
            dt = 2.0 * h
    return cur, log_norm, KrylovInfo(steps, matvecs, err_total, log_norm)


def expmv(A, v, t, tol: float = 1e-10, m: int = 30, m_max: int = 200,
          return_info: bool = False, max_steps: int = 100_000):
    """``exp(t A) v`` by adaptive Lanczos time stepping (``m`` = subspace size)."""
    v = np.asarray(v, dtype=complex)
    cur, log_norm, info = _propagate(A, v, t, tol, m, m_max, max_steps)
    if log_norm > 700:
        raise OverflowError("result norm overflows; use expmv_normalized")
    out = cur * math.exp(log_norm)
    return (out, info) if return_info else out


def expmv_normalized(A, v, t, tol: float = 1e-10, m: int = 30, m_max: int = 200,
                     max_steps: int = 100_000):
    """``exp(t A) v / ||exp(t A) v||`` and the info record (never overflows)."""
    v = np.asarray(v, dtype=complex)
    cur, _, info = _propagate(A, v, t, tol, m, m_max, max_steps)
    return cur, info
