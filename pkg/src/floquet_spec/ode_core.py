"""Matriciant propagation and monodromy of the companion system."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from floquet_spec import kernels
from floquet_spec.errors import InternalConsistencyError, SpecError
from floquet_spec.operator_model import OperatorSpec

TOL_C = 1e-9
CLUSTER_RTOL = 1e-7
DEFAULT_TOL = 1e-12


def _check_tol(tol):
    if not 1e-14 <= tol <= 1e-6:
        raise SpecError(f"tol={tol} outside [1e-14, 1e-6]", "tol")


@dataclass(frozen=True)
class Matriciant:
    """Samples of ``U(t, lambda)`` with ``U(0) = I``."""

    lam: complex
    grid: np.ndarray
    values: np.ndarray
    tol: float
    nsteps: int = 0

    def __call__(self, t):
        """Value at a grid point (exact sample lookup)."""
        idx = int(np.argmin(np.abs(self.grid - t)))
        if abs(self.grid[idx] - t) > 1e-14:
            raise KeyError(f"t={t} is not a sample time")
        return self.values[idx]

    def to_json(self) -> str:
        return json.dumps({
            "lambda": {"re": self.lam.real, "im": self.lam.imag},
            "tol": self.tol,
            "grid": [float(t) for t in self.grid],
            "values": [
                [[{"re": z.real, "im": z.imag} for z in row] for row in U]
                for U in self.values
            ],
        })


def propagate_samples(spec: OperatorSpec, lam, stops, tol: float = DEFAULT_TOL, t0: float = 0.0):
    """Raw propagation from ``U(t0) = I`` to every time in ``stops``.

    ``stops`` must be monotone and move away from ``t0``; times are not
    restricted to one period (used internally for backward propagation).
    """
    harm, coef = spec.coefficient_arrays()
    values, nsteps = kernels.propagate_companion(
        harm, coef, complex(lam), float(t0), np.asarray(stops, dtype=float), float(tol))
    return values, nsteps


def propagate(spec: OperatorSpec, lam, t_end: float = 1.0, tol: float = DEFAULT_TOL,
              grid=None) -> Matriciant:
    """Propagate ``U' = A(t, lam) U``, ``U(0) = I`` up to ``t_end``.

    Parameters
    ----------
    grid : array_like, optional
        Sample times in ``(0, t_end]``; defaults to ``[t_end]``.  The returned
        grid always starts with 0.
    """
    _check_tol(tol)
    if not 0 < t_end <= 1:
        raise SpecError(f"t_end={t_end} outside (0, 1]", "t_end")
    if not spec.is_normalized:
        raise SpecError("spec must be normalized", "leading_sign")
    stops = np.array([t_end]) if grid is None else np.asarray(grid, dtype=float)
    stops = stops[stops > 0]
    if np.any(np.diff(stops) <= 0) or (len(stops) and stops[-1] > t_end + 1e-15):
        raise SpecError("grid must be strictly increasing within (0, t_end]", "grid")
    values, nsteps = propagate_samples(spec, lam, stops, tol)
    n = spec.order
    grid = np.concatenate([[0.0], stops])
    values = np.concatenate([np.eye(n, dtype=complex)[None], values])
    return Matriciant(complex(lam), grid, values, tol, nsteps)


def classify(exponents, tol_c: float = TOL_C):
    tags = []
    for mu in exponents:
        if mu.real < -tol_c:
            tags.append("stable")
        elif mu.real > tol_c:
            tags.append("unstable")
        else:
            tags.append("critical")
    return tuple(tags)


def cluster_multiplicities(values, rtol: float = CLUSTER_RTOL):
    """Group nearly equal eigenvalues; returns ``[(representative, multiplicity)]``."""
    values = list(values)
    used = [False] * len(values)
    out = []
    for i, z in enumerate(values):
        if used[i]:
            continue
        group = [z]
        used[i] = True
        for j in range(i + 1, len(values)):
            if not used[j] and abs(values[j] - z) <= rtol * max(1.0, abs(z)):
                group.append(values[j])
                used[j] = True
        out.append((complex(np.mean(group)), len(group)))
    return out


@dataclass(frozen=True)
class MonodromyResult:
    lam: complex
    U1: np.ndarray
    multiplicators: np.ndarray
    exponents: np.ndarray
    classification: tuple
    tol: float = DEFAULT_TOL

    @property
    def multiplicities(self):
        return cluster_multiplicities(self.multiplicators)

    @property
    def margin(self) -> float:
        return float(np.min(np.abs(np.abs(self.multiplicators) - 1.0)))


def principal_log(rho):
    """``log`` with imaginary part in ``(-pi, pi]``."""
    mu = np.log(np.asarray(rho, dtype=complex))
    # numpy maps the negative real axis with -0.0 imaginary part to -pi
    return np.where(np.isclose(mu.imag, -np.pi, rtol=0, atol=1e-15), mu.real + 1j * np.pi, mu)


def monodromy_from_matrix(lam, U1, tol: float = DEFAULT_TOL, tol_c: float = TOL_C) -> MonodromyResult:
    rho = np.linalg.eigvals(U1)
    if np.any(rho == 0):
        raise InternalConsistencyError("zero multiplicator: monodromy matrix is singular")
    mu = principal_log(rho)
    return MonodromyResult(complex(lam), np.array(U1), rho, mu, classify(mu, tol_c), tol)


def monodromy(spec: OperatorSpec, lam, tol: float = DEFAULT_TOL, tol_c: float = TOL_C) -> MonodromyResult:
    """Monodromy matrix ``U(1, lam)`` with multiplicators and exponents."""
    U = propagate(spec, lam, 1.0, tol)
    return monodromy_from_matrix(lam, U.values[-1], tol, tol_c)


def liouville_determinant(spec: OperatorSpec, lam, t: float = 1.0) -> complex:
    """``exp(int_0^t trace A)``; the exact determinant of ``U(t, lam)``."""
    return complex(np.exp(spec.trace_integral(complex(lam), t)))
