"""Resolvent of the periodic operator through the Floquet Green kernel.

For ``lam`` without critical exponents the bounded solution of
``x' = A(t, lam) x + f`` is ``x(t) = int M(t, s) f(s) ds`` with

    M(t, s) =  F(t) exp(Gamma (t - s)) P1 F(s)^{-1}      (s <= t)
    M(t, s) = -F(t) exp(Gamma (t - s)) P2 F(s)^{-1}      (s >  t)

and ``P1`` the spectral projection onto the stable exponents.  Writing
``t = m + tau`` with integer ``m`` and ``tau`` in ``[0, 1)`` and using
``U(t + 1) = U(t) U(1)`` this is

    M(t, s) = U(tau_t) G diag(chi_k rho_k^(m_t - m_s)) G^{-1} U(tau_s)^{-1},

which needs only samples of the matriciant on one period and integer
powers of the multiplicators (no logarithm branch).  Decaying Floquet
solutions are sampled by backward propagation and growing ones forward, so
no sample is formed by cancellation.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from floquet_spec.errors import CriticalExponents, SpecError, TruncationError
from floquet_spec.floquet import FloquetDecomposition, floquet_factor, order_exponents
from floquet_spec.ode_core import DEFAULT_TOL, TOL_C, principal_log, propagate_samples
from floquet_spec.operator_model import OperatorSpec
from floquet_spec.quadrature import (QuadratureConfig, differentiation_matrices, make_grid,
                                     resolve_panel_width, sub_points)

PHASE_DIGITS = 12
ROW_BLOCK = 512


def _combined_eig(U1, Um1):
    """Multiplicators and eigenvectors with each mode taken from the direction in which it grows."""
    n = len(U1)
    r1, V1 = np.linalg.eig(U1)
    r2, V2 = np.linalg.eig(Um1)
    r2 = 1.0 / r2
    grow = np.abs(r1) >= 1.0
    decay = np.abs(r2) < 1.0
    if grow.sum() + decay.sum() != n:
        return r1, V1
    rho = np.concatenate([r1[grow], r2[decay]])
    G = np.concatenate([V1[:, grow], V2[:, decay]], axis=1)
    return rho, G


class FloquetSampler:
    """Batched evaluation of the Floquet modes of the periodic system at a fixed ``lam``.

    Attributes
    ----------
    rho, mu : (n,) arrays
        Multiplicators and principal exponents, ordered by descending real
        part of ``mu`` (ties: descending imaginary part).
    G, Ginv : (n, n) arrays
        Eigenvectors of ``U(1)`` (unit columns) and the inverse.
    """

    def __init__(self, spec: OperatorSpec, lam, tol: float = DEFAULT_TOL):
        self.spec = spec
        self.lam = complex(lam)
        self.tol = tol
        n = spec.order
        U1 = propagate_samples(spec, self.lam, [1.0], tol)[0][0]
        Um1 = propagate_samples(spec, self.lam, [-1.0], tol)[0][0]
        rho, G = _combined_eig(U1, Um1)
        mu = principal_log(rho)
        order = order_exponents(mu)
        self.rho, self.mu = rho[order], mu[order]
        G = G[:, order]
        self.G = G / np.linalg.norm(G, axis=0)
        self.Ginv = np.linalg.inv(self.G)
        self.cond = float(np.linalg.cond(self.G))
        self.U1 = U1
        self.n = n

    @property
    def sign_mask(self):
        """Stable modes by the sign of ``Re mu`` at ``lam``."""
        return self.mu.real < 0

    def critical(self, tol_c: float = TOL_C) -> bool:
        return bool(np.any(np.abs(self.mu.real) <= tol_c))

    def sample(self, t):
        """Integer parts and mode tables at times ``t`` (any real values).

        Returns ``(m, X, Y)`` where ``X[p][:, k]`` is the Floquet solution
        ``U(tau_p) G_k`` and ``Y[p][k, :]`` the dual row
        ``(G^{-1} U(tau_p)^{-1})_k``.
        """
        t = np.asarray(t, dtype=float).ravel()
        m = np.floor(t)
        tau = np.round(t - m, PHASE_DIGITS)
        wrap = tau >= 1.0
        tau[wrap] -= 1.0
        m[wrap] += 1.0
        uniq, inv = np.unique(tau, return_inverse=True)
        n = self.n
        Uf = np.empty((len(uniq), n, n), dtype=complex)
        Ub = np.empty((len(uniq), n, n), dtype=complex)
        pos = uniq > 0
        Uf[~pos] = np.eye(n)
        if pos.any():
            Uf[pos] = propagate_samples(self.spec, self.lam, uniq[pos], self.tol)[0]
        back = uniq - 1.0
        Ub[::-1] = propagate_samples(self.spec, self.lam, back[::-1], self.tol)[0]
        G, Ginv, rho = self.G, self.Ginv, self.rho
        decay = np.abs(rho) < 1.0
        X = np.where(decay[None, None, :], np.einsum("pij,jk->pik", Ub, G) * rho[None, None, :],
                     np.einsum("pij,jk->pik", Uf, G))
        Yf = np.einsum("kj,pji->pki", Ginv, np.linalg.inv(Uf))
        Yb = np.einsum("kj,pji->pki", Ginv, np.linalg.inv(Ub)) / rho[None, :, None]
        Y = np.where(decay[None, :, None], Yf, Yb)
        return m.astype(np.int64), X[inv], Y[inv]

    def kernel(self, t, s, stable_mask=None):
        """Dense ``M(t, s)`` for equal-length arrays ``t, s`` (shape ``(len, n, n)``)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s = np.atleast_1d(np.asarray(s, dtype=float))
        mask = self.sign_mask if stable_mask is None else np.asarray(stable_mask, dtype=bool)
        mt, Xt, _ = self.sample(t)
        ms, _, Ys = self.sample(s)
        dm = (mt - ms)[:, None]
        ge = (t >= s)[:, None]
        use = np.where(ge, mask[None, :], ~mask[None, :])
        expo = np.where(use, dm * self.mu[None, :], 0.0)
        coef = np.where(use, np.exp(expo), 0.0) * np.where(ge, 1.0, -1.0)
        return np.einsum("pik,pk,pkj->pij", Xt, coef, Ys)


def _power_tables(mu, mask, D):
    d = np.arange(D + 1)
    # rho^d for stable-side modes, rho^(-d) for the others
    sgn = np.where(mask, 1.0, -1.0)
    with np.errstate(over="ignore", under="ignore"):
        return np.exp(np.outer(sgn * mu, d))


def assemble_operator(sampler: FloquetSampler, grid, row_vec, stable_mask=None,
                      col_scale=None, row_scale=None, m_sub=None):
    """Nystrom matrix for ``phi -> row(t)^T int M(t, s) e_n c(s) phi(s) ds``.

    Off the diagonal panel plain Gauss weights are used; on a node's own
    panel the kernel jump/kink at ``s = t`` is handled by product
    integration against the panel's Lagrange interpolant of ``phi``.

    Parameters
    ----------
    row_vec : (N, n) array
        Row functional ``row(t_i)`` at the nodes.
    col_scale, row_scale : callables, optional
        Extra factors ``c(s)`` (applied inside the integral, also at the
        product-integration sub-nodes) and an outer row factor ``r(t)``.
    """
    N, n = grid.N, sampler.n
    m_sub = grid.m if m_sub is None else m_sub
    mask = sampler.sign_mask if stable_mask is None else np.asarray(stable_mask, dtype=bool)
    t = grid.nodes
    sigma, omega, lag = sub_points(grid, m_sub)
    mt_all, X_all, Y_all = sampler.sample(np.concatenate([t, sigma.ravel()]))
    mt, ms_sub = mt_all[:N], mt_all[N:].reshape(N, -1)
    A = np.einsum("ia,iak->ik", row_vec, X_all[:N])
    B = Y_all[:N, :, n - 1]
    B_sub = Y_all[N:, :, n - 1].reshape(N, -1, n)

    if col_scale is None:
        cs, cs_sub = np.ones(N), np.ones(sigma.shape)
    else:
        cs, cs_sub = col_scale(t), col_scale(sigma)

    D = int(mt.max() - mt.min()) + 1
    pw = _power_tables(sampler.mu, mask, D)
    Bw = B * (cs * grid.weights)[:, None]
    K = np.zeros((N, N), dtype=complex)
    for r0 in range(0, N, ROW_BLOCK):
        r1 = min(N, r0 + ROW_BLOCK)
        dm = mt[r0:r1, None] - mt[None, :]
        ge = t[r0:r1, None] >= t[None, :]
        for k in range(n):
            if mask[k]:
                C = np.where(ge, pw[k][np.clip(dm, 0, D)], 0.0)
            else:
                C = np.where(ge, 0.0, -pw[k][np.clip(-dm, 0, D)])
            K[r0:r1] += A[r0:r1, k, None] * C * Bw[None, :, k]

    # diagonal panels
    dm = mt[:, None] - ms_sub
    ge = t[:, None] >= sigma
    vals = np.zeros(sigma.shape, dtype=complex)
    for k in range(n):
        if mask[k]:
            C = np.where(ge, pw[k][np.clip(dm, 0, D)], 0.0)
        else:
            C = np.where(ge, 0.0, -pw[k][np.clip(-dm, 0, D)])
        vals += A[:, k, None] * C * B_sub[:, :, k]
    vals *= cs_sub * omega
    r = np.arange(N) % grid.m
    local = np.einsum("iq,iqj->ij", vals, lag[r])
    start = grid.panel * grid.m
    rows = np.repeat(np.arange(N), grid.m)
    cols = (start[:, None] + np.arange(grid.m)[None, :]).ravel()
    K[rows, cols] = local.ravel()

    if row_scale is not None:
        K *= row_scale(t)[:, None]
    return K


def kernel_diagonal(sampler: FloquetSampler, t, row_vec, stable_mask=None) -> np.ndarray:
    """``row(t)^T M(t, t) e_n`` with ``M(t, t)`` the mean of the one-sided limits.

    The one-sided limits are ``X P1 Y`` and ``-X P2 Y``; for ``n >= 2`` the
    last column is continuous and the mean is the value itself.
    """
    mask = sampler.sign_mask if stable_mask is None else np.asarray(stable_mask, dtype=bool)
    _, X, Y = sampler.sample(t)
    A = np.einsum("ia,iak->ik", row_vec, X)
    B = Y[:, :, sampler.n - 1]
    return 0.5 * (A * B) @ np.where(mask, 1.0, -1.0)


# --- public types ------------------------------------------------------------

@dataclass(frozen=True)
class GreenKernel:
    lam: complex
    decomposition: FloquetDecomposition
    P1: np.ndarray
    P2: np.ndarray
    stable_mask: np.ndarray
    branch: object = None


def green_kernel(spec: OperatorSpec, lam, branch=None, grid_size: int = 256,
                 tol: float = DEFAULT_TOL) -> GreenKernel:
    """Green kernel data at ``lam``.

    Without ``branch`` the projections follow the exponent signs and
    critical exponents raise :class:`CriticalExponents`; with a branch the
    branch's frozen partition is used (analytic continuation).
    """
    dec = floquet_factor(spec, lam, grid_size, tol)
    if branch is None:
        if dec.critical:
            raise CriticalExponents(f"lambda={complex(lam)!r} has critical exponents")
        mask = dec.exponents.real < 0
    else:
        mask = branch.stable_mask(spec, lam, np.exp(dec.exponents))
    P1 = dec.projection(True, mask)
    return GreenKernel(complex(lam), dec, P1, np.eye(spec.order) - P1, mask, branch)


def green_kernel_eval(K: GreenKernel, t: float, s: float) -> np.ndarray:
    """``M(t, s)`` from the interpolated Floquet factor."""
    dec = K.decomposition
    dt = float(t) - float(s)
    if dt >= 0:
        use, sign = K.stable_mask, 1.0
    else:
        use, sign = ~K.stable_mask, -1.0
    d = np.zeros(len(dec.exponents), dtype=complex)
    d[use] = np.exp(dec.exponents[use] * dt)
    E = (dec.G * d[None, :]) @ dec.Ginv
    Ft = dec.F(t)
    Fs = dec.F(s)
    return sign * Ft @ E @ np.linalg.inv(Fs)


@dataclass(frozen=True)
class GridFunction:
    grid: np.ndarray
    values: np.ndarray
    L: float

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if g.ndim != 1 or np.any(np.diff(g) <= 0):
            raise SpecError("grid must be strictly increasing", "grid")
        if len(v) != len(g) or not np.all(np.isfinite(v)):
            raise SpecError("values must be finite and match the grid", "values")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, f, quad: QuadratureConfig, spec: OperatorSpec = None):
        grid = quadrature_grid(quad, spec)
        return cls(grid.nodes, f(grid.nodes), grid.L)

    def __add__(self, other):
        return GridFunction(self.grid, self.values + other.values, self.L)

    def __rmul__(self, a):
        return GridFunction(self.grid, a * self.values, self.L)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "re", "im"))
        v = self.values if self.values.ndim == 1 else self.values[:, 0]
        for t, z in zip(self.grid, v):
            w.writerow((repr(float(t)), repr(float(z.real)), repr(float(z.imag))))
        return buf.getvalue()

    def to_json(self) -> str:
        v = self.values if self.values.ndim == 1 else self.values[:, 0]
        return json.dumps({"L": self.L, "t": [float(x) for x in self.grid],
                           "re": [float(z.real) for z in v], "im": [float(z.imag) for z in v]})


def quadrature_grid(quad: QuadratureConfig, spec: OperatorSpec = None):
    if quad.L is None:
        raise SpecError("QuadratureConfig.L is required for grid functions", "L")
    width = quad.panel_width or (resolve_panel_width(spec) if spec is not None else 0.25)
    bps = spec.breakpoints if spec is not None else (0.0,)
    return make_grid(quad.L, width, quad.nodes_per_panel, bps)


def _boundary_magnitude(values) -> float:
    v = np.abs(np.asarray(values))
    top = v.max()
    return 0.0 if top == 0 else float(max(v[0], v[-1]) / top)


def apply_resolvent(spec: OperatorSpec, lam, v: GridFunction, quad: QuadratureConfig = None,
                    branch=None, tol: float = DEFAULT_TOL) -> GridFunction:
    """First component of ``x = int M(t, s) (0, .., 0, v(s)) ds``; solves ``(H0 - lam) u = v``."""
    quad = quad or QuadratureConfig(L=v.L)
    if quad.L is None:
        quad = quad.with_(L=v.L)
    grid = quadrature_grid(quad, spec)
    if len(v.grid) != grid.N or not np.allclose(v.grid, grid.nodes, rtol=0, atol=1e-12):
        raise SpecError("v must be sampled on the quadrature nodes (see GridFunction.from_function)",
                        "v.grid")
    mag = _boundary_magnitude(v.values)
    if mag > 1e-10:
        raise TruncationError(mag)
    if not np.any(v.values):
        return GridFunction(grid.nodes, np.zeros(grid.N, dtype=complex), grid.L)
    sampler = FloquetSampler(spec, lam, tol)
    if branch is None:
        if sampler.critical():
            raise CriticalExponents(f"lambda={complex(lam)!r} has critical exponents")
        mask = None
    else:
        mask = branch.stable_mask(spec, lam, sampler.rho)
    row = np.zeros((grid.N, spec.order))
    row[:, 0] = 1.0
    K = assemble_operator(sampler, grid, row, mask)
    return GridFunction(grid.nodes, K @ v.values, grid.L)


def apply_operator(spec: OperatorSpec, lam, u: GridFunction, quad: QuadratureConfig,
                   interior: bool = True):
    """``(H0 - lam) u`` by per-panel polynomial differentiation on the Gauss nodes."""
    grid = quadrature_grid(quad.with_(L=quad.L or u.L), spec)
    m = grid.m
    n = spec.order
    D = differentiation_matrices(m, n)
    npan = len(grid.edges) - 1
    U = u.values.reshape(npan, m)
    half = 0.5 * np.diff(grid.edges)
    out = -complex(lam) * u.values
    for k in range(n + 1):
        dk = np.einsum("ij,pj->pi", D[k], U) / half[:, None] ** k
        coeff = 1.0 if k == n else spec.a(k, grid.nodes)
        out = out + coeff * dk.ravel()
    return out, grid


def resolvent_residual(spec: OperatorSpec, lam, v: GridFunction, u: GridFunction,
                       quad: QuadratureConfig = None) -> float:
    """Relative discrete-L2 residual ``||(H0 - lam) u - v|| / ||v||``.

    Uses the quadrature weights of the grid; returns the absolute norm when
    ``v`` vanishes.  The outermost panel on each side is excluded (interior
    check).
    """
    quad = quad or QuadratureConfig(L=u.L)
    Hu, grid = apply_operator(spec, lam, u, quad.with_(L=quad.L or u.L))
    sel = (grid.panel > 0) & (grid.panel < grid.panel.max())
    w = grid.weights[sel]
    r = np.sqrt(np.sum(w * np.abs(Hu[sel] - v.values[sel]) ** 2))
    nv = np.sqrt(np.sum(w * np.abs(v.values[sel]) ** 2))
    if nv == 0:
        return float(r)
    return float(r / nv)
