"""Composite Gauss-Legendre panels on ``[-L, L]`` and product-integration rules.

Panels are aligned to the lattice ``k * panel_width`` (``1 / panel_width``
an integer) and additionally split at breakpoints, so node phases
``t mod 1`` repeat from period to period and one propagation over the unit
interval serves every node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from floquet_spec.errors import SpecError


@dataclass(frozen=True)
class QuadratureConfig:
    """Discretization knobs.

    ``panel_width=None`` and ``L=None`` are resolved from the problem (see
    :func:`resolve_panel_width` and the truncation rules of the caller).
    """

    panel_width: float = None
    nodes_per_panel: int = 8
    L: float = None
    trunc_tol: float = 1e-12
    sub_nodes: int = None
    core_width: float = None
    core_radius: float = None

    def __post_init__(self):
        for name in ("panel_width", "core_width"):
            w = getattr(self, name)
            if w is None:
                continue
            w = float(w)
            k = round(1.0 / w) if w > 0 else 0
            if not (w > 0 and (abs(k * w - 1.0) < 1e-12 or w == round(w))):
                raise SpecError(f"{name} must be 1/k or k for a positive integer k", name)
        if self.nodes_per_panel < 2:
            raise SpecError("nodes_per_panel must be >= 2", "nodes_per_panel")
        if self.L is not None and not self.L > 0:
            raise SpecError("L must be positive", "L")

    def with_(self, **kw) -> "QuadratureConfig":
        d = dict(panel_width=self.panel_width, nodes_per_panel=self.nodes_per_panel, L=self.L,
                 trunc_tol=self.trunc_tol, sub_nodes=self.sub_nodes,
                 core_width=self.core_width, core_radius=self.core_radius)
        d.update(kw)
        return QuadratureConfig(**d)

    def refined(self, factor: float) -> "QuadratureConfig":
        """Increase the node count by about ``factor`` (more nodes per panel)."""
        m = int(math.ceil(self.nodes_per_panel * factor))
        return self.with_(nodes_per_panel=m)

    def to_dict(self) -> dict:
        return {"panel_width": self.panel_width, "nodes_per_panel": self.nodes_per_panel,
                "L": self.L, "trunc_tol": self.trunc_tol,
                "core_width": self.core_width, "core_radius": self.core_radius}


def snap_panel_width(w: float, cap: float = 1.0) -> float:
    """Largest ``1/k`` (or integer, when ``cap > 1``) not exceeding ``min(w, cap)``."""
    w = min(float(cap), float(w))
    if w >= 1.0:
        return float(math.floor(w + 1e-12))
    return 1.0 / math.ceil(1.0 / w - 1e-12)


def resolve_panel_width(spec, lam_scale: float = 0.0) -> float:
    """Default panel width.

    0.25 for nonconstant periodic coefficients (resolves the oscillation of
    the Floquet factor), 1.0 for constant ones; reduced so that
    ``width * lam_scale <= 2`` where ``lam_scale`` bounds ``|mu|`` (the
    kernel varies like ``exp(mu (t - s))``).
    """
    base = 0.25 if not spec.is_constant_coefficient else 1.0
    if not spec.is_constant_coefficient:
        base = min(base, 1.0 / max(1, 2 * spec.max_harmonic))
    if lam_scale > 0:
        base = min(base, 2.0 / lam_scale)
    return snap_panel_width(base)


@lru_cache(maxsize=64)
def gauss_legendre(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_edges(L: float, width: float, breakpoints=(), core=None) -> np.ndarray:
    """Panel edges; ``core = (radius, fine_width)`` refines ``|t| <= radius``."""
    k = int(math.ceil(L / width - 1e-9))
    edges = set(np.round(np.arange(-k, k + 1) * width, 13))
    if core is not None and core[0] > 0 and core[1] < width:
        kc = int(math.ceil(min(core[0], L) / core[1] - 1e-9))
        edges |= set(np.round(np.arange(-kc, kc + 1) * core[1], 13))
    edges |= {round(float(b), 13) for b in breakpoints if -L < b < L}
    edges = np.array(sorted(e for e in edges if -L < e < L))
    edges = np.concatenate([[-L], edges, [L]])
    # drop slivers created by a breakpoint next to a lattice point
    keep = np.concatenate([[True], np.diff(edges) > 1e-9])
    return edges[keep]


@dataclass(frozen=True)
class PanelGrid:
    edges: np.ndarray
    m: int
    nodes: np.ndarray
    weights: np.ndarray
    panel: np.ndarray  # panel index per node

    @property
    def N(self) -> int:
        return len(self.nodes)

    @property
    def L(self) -> float:
        return float(self.edges[-1])


def make_grid(L: float, width: float, m: int, breakpoints=(), core=None) -> PanelGrid:
    edges = panel_edges(L, width, breakpoints, core)
    x, w = gauss_legendre(m)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + half * (x + 1.0)).ravel()
    weights = (half * w).ravel()
    panel = np.repeat(np.arange(len(edges) - 1), m)
    return PanelGrid(edges, m, nodes, weights, panel)


@lru_cache(maxsize=64)
def product_rule(m: int, m_sub: int):
    """Reference rules for integrating ``k(x_r, s) p(s)`` over ``[-1, 1]``.

    ``p`` is the degree ``m - 1`` interpolant through the Gauss nodes and
    ``k`` may be discontinuous at the target node ``x_r``.  For each target
    ``r`` returns sub-nodes ``xi[r]`` (``2 m_sub`` values, split at
    ``x_r``), weights ``om[r]`` and Lagrange values ``lag[r]`` of shape
    ``(2 m_sub, m)``.
    """
    x, _ = gauss_legendre(m)
    y, v = gauss_legendre(m_sub)
    xi = np.empty((m, 2 * m_sub))
    om = np.empty((m, 2 * m_sub))
    for r, xr in enumerate(x):
        left = 0.5 * (xr + 1.0)
        right = 0.5 * (1.0 - xr)
        xi[r, :m_sub] = -1.0 + left * (y + 1.0)
        om[r, :m_sub] = left * v
        xi[r, m_sub:] = xr + right * (y + 1.0)
        om[r, m_sub:] = right * v
    lag = np.empty((m, 2 * m_sub, m))
    for r in range(m):
        lag[r] = lagrange_matrix(x, xi[r])
    for arr in (xi, om, lag):
        arr.setflags(write=False)
    return xi, om, lag


def lagrange_matrix(x, z) -> np.ndarray:
    """``L[i, q] = ell_q(z_i)`` for the Lagrange basis on nodes ``x``."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    # barycentric form
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bw = 1.0 / diff.prod(axis=1)
    d = z[:, None] - x[None, :]
    exact = np.isclose(d, 0.0, atol=1e-15)
    d[exact] = 1.0
    t = bw / d
    out = t / t.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    out[rows] = exact[rows].astype(float)
    return out


@lru_cache(maxsize=64)
def differentiation_matrices(m: int, order: int):
    """Reference-panel matrices ``D^k`` (``k = 0..order``) on Gauss nodes."""
    x, _ = gauss_legendre(m)
    # monomial-free construction: D1 from the barycentric formula
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bw = 1.0 / diff.prod(axis=1)
    D = (bw[None, :] / bw[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    mats = [np.eye(m)]
    for _ in range(order):
        mats.append(D @ mats[-1])
    return mats


def sub_points(grid: PanelGrid, m_sub: int):
    """Physical sub-nodes for each node's diagonal panel rule.

    Returns ``(sigma, omega, lag)`` with shapes ``(N, 2 m_sub)``,
    ``(N, 2 m_sub)`` and the reference Lagrange table ``(m, 2 m_sub, m)``.
    """
    xi, om, lag = product_rule(grid.m, m_sub)
    a = grid.edges[grid.panel]
    half = 0.5 * (grid.edges[grid.panel + 1] - a)
    r = np.arange(grid.N) % grid.m
    sigma = a[:, None] + half[:, None] * (xi[r] + 1.0)
    omega = half[:, None] * om[r]
    return sigma, omega, lag
