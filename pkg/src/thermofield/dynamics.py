"""Real-time evolution ``psi(t) = exp(-i t L) psi`` and ergodic averages."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .kms import expectation, interacting_kms_vector
from .krylov import KrylovError, expmv
from .liouvillian import LiouvillianBundle


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    cesaro: np.ndarray


def evolve(bundle: LiouvillianBundle, psi: np.ndarray, t: float, tol: float = 1e-11,
           L=None) -> np.ndarray:
    """``exp(-i t L_lam) psi`` by Lanczos propagation; norm is checked to 1e-10."""
    if t == 0:
        return np.array(psi, dtype=complex, copy=True)
    L = bundle.L_lambda if L is None else L
    out = expmv(L, psi, -1j * t, tol=tol)
    n0, n1 = np.linalg.norm(psi), np.linalg.norm(out)
    if abs(n1 - n0) > 1e-10 * max(1.0, n0):
        raise KrylovError(f"norm drift {abs(n1 - n0):.3g} in unitary step", abs(n1 - n0))
    return out


def cesaro_average(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``(1/t) int_0^t value`` by the trapezoid rule; the t=0 entry is the value itself."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    integral = cumulative_trapezoid(values, times, initial=0.0)
    out = np.empty_like(values)
    pos = times > 0
    out[pos] = integral[pos] / times[pos]
    out[~pos] = values[~pos]
    return out


def heisenberg_expectation(bundle: LiouvillianBundle, psi0: np.ndarray, A, times,
                           tol: float = 1e-11) -> Trajectory:
    """``<psi(t), A psi(t)>`` on an increasing time list starting at 0 (propagated stepwise)."""
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must start at 0 and increase strictly")
    L = bundle.L_lambda
    psi = np.array(psi0, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    values = np.empty(times.size)
    values[0] = expectation(A, psi)
    for k in range(1, times.size):
        psi = evolve(bundle, psi, times[k] - times[k - 1], tol, L=L)
        values[k] = expectation(A, psi)
    return Trajectory(times, values, cesaro_average(times, values))


@dataclass
class RTEResult:
    deviation: float
    trend: np.ndarray
    initial_deviation: float
    equilibrium_value: float
    recurrence_time: float
    trajectory: Trajectory


def recurrence_time(bundle: LiouvillianBundle) -> float:
    return 2.0 * math.pi / bundle.grid.spacing


def rte_diagnostic(bundle: LiouvillianBundle, initial: np.ndarray, A, T: float,
                   samples: int = 400, reference: np.ndarray | None = None) -> RTEResult:
    """Distance of the ergodic average from the KMS expectation at T/4, T/2, T.

    ``reference`` defaults to the interacting KMS vector of the bundle. The
    recurrence time ``2 pi / du`` is reported; windows beyond it are allowed
    (to document recurrences) but carry no return-to-equilibrium meaning.
    """
    omega = interacting_kms_vector(bundle) if reference is None else reference
    target = expectation(A, omega)
    times = np.linspace(0.0, T, samples + 1)
    traj = heisenberg_expectation(bundle, initial, A, times)
    dev = np.abs(traj.cesaro - target)
    trend = np.array([np.interp(T * f, times, dev) for f in (0.25, 0.5, 1.0)])
    return RTEResult(float(dev[-1]), trend, float(dev[0]), target, recurrence_time(bundle), traj)
