"""Brute-force reference spectra.

Finite differences on a truncated interval for the full perturbed operator,
and a Fourier (Bloch-wave) eigensolver for the periodic part.  Both work in
the coordinates of the spec they are given: a raw spec yields raw
eigenvalues, a normalized spec normalized ones.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from floquet_spec.errors import SpecError
from floquet_spec.ode_core import monodromy
from floquet_spec.operator_model import OperatorSpec, _leading_constant, normalize


def fornberg_weights(z: float, x, m: int) -> np.ndarray:
    """Finite-difference weights for derivatives ``0..m`` at ``z`` on nodes ``x``.

    Returns an array ``c`` of shape ``(m + 1, len(x))`` with ``c[k] @ f(x)``
    approximating ``f^(k)(z)`` (Fornberg's recursion).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((m + 1, n))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


@dataclass(frozen=True)
class FDConfig:
    """Truncated-domain discretization: ``N`` interior points on ``[-L, L]``."""

    L: float = 10.0
    N: int = 400
    stencil_order: int = 4
    bc: str = "dirichlet"

    def __post_init__(self):
        if self.L <= 0:
            raise SpecError("L must be positive", "L")
        if self.N < 16 * self.L:
            raise SpecError(f"N={self.N} below 16*L={16 * self.L:g}", "N")
        if self.stencil_order < 2 or self.stencil_order % 2:
            raise SpecError("stencil_order must be even and >= 2", "stencil_order")
        if self.bc != "dirichlet":
            raise SpecError(f"unsupported boundary condition {self.bc!r}", "bc")

    def scaled(self, growth: float) -> "FDConfig":
        return FDConfig(self.L * growth, int(math.ceil(self.N * growth)), self.stencil_order, self.bc)


def _stencil_size(k: int, order: int) -> int:
    if k == 0:
        return 1
    s = k + order - 1
    return s if s % 2 else s + 1


def fd_matrix(spec: OperatorSpec, cfg: FDConfig) -> tuple:
    """Dense discretization of the operator; returns ``(matrix, grid)``.

    Boundary nodes ``t = -L, L`` carry the Dirichlet value 0 and are not
    unknowns.  Rows whose centered stencil would leave ``[-L, L]`` use
    one-sided stencils of ``k + stencil_order`` points.
    """
    N, L, p = cfg.N, cfg.L, cfg.stencil_order
    n = spec.order
    nodes = np.linspace(-L, L, N + 2)
    t = nodes[1:-1]
    lead = _leading_constant(spec.leading_sign)
    H = np.zeros((N, N), dtype=complex)
    for k in range(n + 1):
        coeff = lead * np.ones(N) if k == n else spec.a(k, t) + spec.q(k, t)
        if k < n and not np.any(coeff):
            continue
        s = _stencil_size(k, p)
        half = s // 2
        for i in range(N):
            node = i + 1
            lo, hi = node - half, node + half + 1
            if lo < 0 or hi > N + 2:
                s1 = k + p
                lo = 0 if lo < 0 else N + 2 - s1
                hi = lo + s1
            idx = np.arange(lo, hi)
            w = fornberg_weights(nodes[node], nodes[idx], k)[k]
            inner = (idx >= 1) & (idx <= N)
            H[i, idx[inner] - 1] += coeff[i] * w[inner]
    return H, t


def fd_eigenvalues(spec: OperatorSpec, cfg: FDConfig = FDConfig()) -> np.ndarray:
    """All eigenvalues of the dense finite-difference matrix, sorted by real part."""
    H, _ = fd_matrix(spec, cfg)
    ev = sla.eigvals(H)
    return ev[np.lexsort((ev.imag, ev.real))]


def band_distance(spec: OperatorSpec, lam, h: float = 1e-6) -> float:
    """First-order estimate of the distance from ``lam`` to the continuous spectrum.

    ``min_k |Re mu_k| / |mu_k'|`` with exponents of the periodic part and
    ``mu_k'`` by a forward difference with nearest-neighbour matching.
    """
    nspec, _ = normalize(spec.periodic_part())
    # local map only: the returned LambdaMap composes with earlier normalizations
    c = _leading_constant(spec.leading_sign).real
    z = complex(lam) / c
    step = h * (1 + abs(z))
    r0 = monodromy(nspec, z).multiplicators
    r1 = monodromy(nspec, z + step).multiplicators
    best = math.inf
    for rho in r0:
        j = int(np.argmin(np.abs(r1 - rho)))
        dmu = abs(np.log(r1[j] / rho)) / step
        # back to the coordinates of `spec`
        d = abs(math.log(abs(rho))) / max(dmu, 1e-300) * abs(c)
        best = min(best, d)
    return best


def converged_eigenvalues(spec: OperatorSpec, cfg: FDConfig = FDConfig(), growth: float = 1.5,
                          move_tol: float = 1e-3, band_tol: float = 1e-2, window=None):
    """Eigenvalues stable under growing ``(L, N)`` and away from the bands.

    An eigenvalue of the base run survives when the grown run has an
    eigenvalue within ``move_tol`` and its estimated band distance exceeds
    ``band_tol``.  ``window`` (a Rectangle) optionally restricts the search.
    Returns the grown-run values, sorted.
    """
    if not growth > 1:
        raise SpecError("growth must exceed 1", "growth")
    e1 = fd_eigenvalues(spec, cfg)
    e2 = fd_eigenvalues(spec, cfg.scaled(growth))
    out = []
    for z in e1:
        if window is not None and not window.contains(z):
            continue
        d = np.abs(e2 - z)
        j = int(np.argmin(d))
        if d[j] >= move_tol:
            continue
        if band_distance(spec, e2[j]) <= band_tol:
            continue
        if all(abs(e2[j] - w) > 1e-12 for w in out):
            out.append(complex(e2[j]))
    out.sort(key=lambda w: (w.real, w.imag))
    return out


def eigenvalues_to_csv(values, cfg: FDConfig) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("re", "im", "L", "N"))
    for z in values:
        w.writerow((repr(float(z.real)), repr(float(z.imag)), repr(float(cfg.L)), cfg.N))
    return buf.getvalue()


def bloch_matrix(spec: OperatorSpec, theta: float, M: int) -> np.ndarray:
    """Fourier-mode matrix of the periodic part acting on ``exp(i theta t) * (1-periodic)``.

    Modes ``m = -K..K`` with ``M = 2K + 1``.
    """
    K = M // 2
    modes = np.arange(-K, K + 1)
    n = spec.order
    lead = _leading_constant(spec.leading_sign)
    sym = 1j * (theta + 2 * np.pi * modes)
    B = np.diag(lead * sym ** n).astype(complex)
    for k, lst in enumerate(spec.periodic_coeffs):
        for c in lst:
            if c.value == 0:
                continue
            # (a_k d^k u)_m picks up mode m - index of u
            src = modes - c.index
            ok = np.abs(src) <= K
            B[np.nonzero(ok)[0], src[ok] + K] += c.value * sym[src[ok] + K] ** k
    return B


def bloch_bands(spec: OperatorSpec, theta_grid, M: int = 65):
    """Eigenvalues of the Bloch problem per phase.

    Returns an array of shape ``(len(theta_grid), M)``, each row sorted by
    real part.  Perturbation terms are ignored.
    """
    out = []
    for th in np.asarray(theta_grid, dtype=float):
        ev = np.linalg.eigvals(bloch_matrix(spec, th, M))
        out.append(ev[np.lexsort((ev.imag, ev.real))])
    return np.array(out)


def bloch_intervals(spec: OperatorSpec, theta_count: int = 256, M: int = 65, window=None):
    """Real band intervals of selfadjoint periodic data from Bloch samples.

    The theta grid covers ``[0, pi]`` and includes both ends, where band
    edges of real even-order data sit.  Band ``j`` is the range of the
    ``j``-th eigenvalue over theta.  Only the lowest ``M // 4`` bands are
    kept (higher modes are truncation-dominated); with ``window`` the
    intervals are clipped to its real range.
    """
    th = np.linspace(0.0, np.pi, theta_count // 2 + 1)
    ev = bloch_bands(spec, th, M).real
    keep = M // 4
    lead = _leading_constant(spec.leading_sign).real
    # sort so that band 0 is the one nearest the top of the spectrum of d^n
    ev = np.sort(ev, axis=1)
    if lead * (1j ** spec.order).real < 0:
        ev = ev[:, ::-1]
    ivs = [(ev[:, j].min(), ev[:, j].max()) for j in range(keep)]
    if window is not None:
        ivs = [(max(a, window.re0), min(b, window.re1)) for a, b in ivs
               if b >= window.re0 and a <= window.re1]
    return ivs
