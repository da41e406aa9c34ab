"""Birman-Schwinger determinant, analytic continuation and root finding.

An eigenfunction of ``H = H0 + B`` satisfies ``x' = A x - e_n q(t)^T x``
with ``x = (u, u', ..)``.  Writing ``psi(t) = q(t)^T x(t)`` the bounded
solutions are exactly the ``psi`` with

    psi(t) + int q(t)^T M(t, s) e_n psi(s) ds = 0,

a scalar second-kind equation.  The block operator
``exp(-delta|t|) M(t, s) e_n q(s)^T exp(delta|s|)`` factors as ``U V`` with
``V`` multiplication by ``q^T exp(delta|.|)``, so its determinant equals
``det(I + V U)``, the scalar kernel above.  ``d(lam)`` is that determinant
for the Nystrom matrix, conjugated by ``exp(delta|t|)`` to keep entries
bounded on the continued sheet (see :meth:`BSMatrix.full_matrix`).

Continuation across a band: the projections are built from a partition of
the Floquet modes frozen at a seed point and carried along paths by
tracking the multiplicators.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from floquet_spec.errors import (BranchAmbiguity, ContourTooCoarse, CriticalExponents,
                                 OutsideContinuationRegion, SeedOnSpectrum, SpecError)
from floquet_spec.floquet import order_exponents
from floquet_spec.ode_core import DEFAULT_TOL, principal_log, propagate_samples
from floquet_spec.operator_model import LambdaMap, OperatorSpec
from floquet_spec.quadrature import QuadratureConfig, make_grid, resolve_panel_width, snap_panel_width
from floquet_spec.regions import Rectangle
from floquet_spec.resolvent import FloquetSampler, _combined_eig, assemble_operator, kernel_diagonal

SCHEMA_VERSION = "1"
SEED_MARGIN = 1e-4
COLLISION_GAP = 1e-8
MOVE_FRACTION = 0.1
CORE_WIDTH = 0.25
CORE_TOL = 5e-2
TAIL_CAP = 4.0


def multiplicators(spec: OperatorSpec, lam, tol: float = DEFAULT_TOL):
    """Multiplicators at ``lam`` (each mode from its growing direction), exponent-ordered."""
    U1 = propagate_samples(spec, complex(lam), [1.0], tol)[0][0]
    Um1 = propagate_samples(spec, complex(lam), [-1.0], tol)[0][0]
    rho, _ = _combined_eig(U1, Um1)
    return rho[order_exponents(principal_log(rho))]


def _log_dist(a, b):
    return np.abs(np.log(np.asarray(a)[:, None] / np.asarray(b)[None, :]))


def match(rho_from, rho_to):
    """Permutation ``p`` with ``rho_to[p[k]]`` the partner of ``rho_from[k]``."""
    cost = _log_dist(rho_from, rho_to)
    r, c = linear_sum_assignment(cost)
    p = np.empty(len(rho_from), dtype=int)
    p[r] = c
    return p


def _gaps(rho):
    if len(rho) < 2:
        return np.full(len(rho), np.inf)
    d = _log_dist(rho, rho)
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1)


def track(spec: OperatorSpec, lam0, rho0, lam1, tol: float = DEFAULT_TOL, min_step: float = 1e-12):
    """Continue the multiplicators ``rho0`` at ``lam0`` along the segment to ``lam1``.

    Steps are halved until every multiplicator moves (in ``|log|`` distance)
    less than a tenth of its gap to the others, and doubled after each
    accepted step.  Raises :class:`BranchAmbiguity` when two multiplicators
    collide (gap below 1e-8).
    """
    lam0, lam1 = complex(lam0), complex(lam1)
    rho = np.asarray(rho0, dtype=complex)
    if lam0 == lam1 or len(rho) == 1:
        return rho if len(rho) > 1 else multiplicators(spec, lam1, tol)
    pos, h = 0.0, 1.0
    while pos < 1.0:
        step = min(h, 1.0 - pos)
        z = lam0 + (lam1 - lam0) * (pos + step)
        gap = _gaps(rho)
        if gap.min() < COLLISION_GAP:
            raise BranchAmbiguity(lam0 + (lam1 - lam0) * pos, float(gap.min()))
        new = multiplicators(spec, z, tol)
        p = match(rho, new)
        moved = np.abs(np.log(new[p] / rho))
        if np.all(moved < MOVE_FRACTION * gap):
            rho = new[p]
            pos += step
            h = 2 * step
        else:
            h = 0.5 * step
            if h * abs(lam1 - lam0) < min_step:
                raise BranchAmbiguity(z, float(gap.min()))
    return rho


@dataclass(frozen=True)
class BranchTag:
    """Frozen partition of the Floquet modes, continued from ``reference_lambda``.

    ``partition[k]`` is True when seed mode ``k`` (exponent order at the
    seed) is on the P1 (stable) side.
    """

    reference_lambda: complex
    partition: tuple
    delta: float
    path: tuple = ()
    reference_rho: tuple = ()
    tol: float = DEFAULT_TOL
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    def _anchor(self, spec):
        """Multiplicators tracked along the stored path (cached)."""
        key = ("anchor",)
        if key not in self._cache:
            lam, rho = self.reference_lambda, np.array(self.reference_rho)
            for z in self.path:
                rho = track(spec, lam, rho, z, self.tol)
                lam = complex(z)
            self._cache[key] = (lam, rho)
        return self._cache[key]

    def tracked(self, spec, lam):
        """Seed-ordered multiplicators continued to ``lam`` (path, then a straight segment)."""
        lam = complex(lam)
        if lam not in self._cache:
            if len(self._cache) > 8192:
                anchor = self._cache.get(("anchor",))
                self._cache.clear()
                if anchor is not None:
                    self._cache[("anchor",)] = anchor
            z0, rho0 = self._anchor(spec)
            self._cache[lam] = track(spec, z0, rho0, lam, self.tol)
        return self._cache[lam]

    def violation(self, spec, lam) -> float:
        """Largest excess over the continuation inequalities (<= 0 when valid)."""
        rho = self.tracked(spec, lam)
        part = np.asarray(self.partition, dtype=bool)
        lr = np.log(np.abs(rho))
        v1 = lr[part] - self.delta
        v2 = -self.delta - lr[~part]
        return float(max(np.max(v1, initial=-np.inf), np.max(v2, initial=-np.inf)))

    def stable_mask(self, spec, lam, rho_target):
        """P1-side mask aligned with ``rho_target`` (the multiplicators at ``lam``)."""
        v = self.violation(spec, lam)
        if v >= 0:
            raise OutsideContinuationRegion(complex(lam), v)
        rho = self.tracked(spec, lam)
        p = match(rho, np.asarray(rho_target))
        mask = np.zeros(len(rho), dtype=bool)
        mask[p] = np.asarray(self.partition, dtype=bool)
        return mask

    def to_dict(self) -> dict:
        return {
            "reference_lambda": {"re": self.reference_lambda.real, "im": self.reference_lambda.imag},
            "partition": ["P1" if p else "P2" for p in self.partition],
            "delta": self.delta,
            "path": [{"re": complex(z).real, "im": complex(z).imag} for z in self.path],
        }


def default_delta(spec: OperatorSpec) -> float:
    return 0.5 * spec.tau


def make_branch(spec: OperatorSpec, component_seed, delta=None, path=(),
                tol: float = DEFAULT_TOL) -> BranchTag:
    """Fix the exponent partition at ``component_seed`` (normalized coordinates)."""
    if not spec.is_normalized:
        raise SpecError("spec must be normalized", "leading_sign")
    seed = complex(component_seed)
    delta = default_delta(spec) if delta is None else float(delta)
    if not 0 < delta < spec.tau:
        raise SpecError(f"delta={delta} must lie in (0, tau={spec.tau})", "delta")
    rho = multiplicators(spec, seed, tol)
    margin = float(np.min(np.abs(np.abs(rho) - 1.0)))
    if margin <= SEED_MARGIN:
        raise SeedOnSpectrum(seed, margin)
    part = tuple(bool(x) for x in np.abs(rho) < 1.0)
    return BranchTag(seed, part, delta, tuple(complex(z) for z in path), tuple(complex(r) for r in rho), tol)


# --- discretization ----------------------------------------------------------

def truncation_length(spec: OperatorSpec, delta: float, tol: float = 1e-12) -> float:
    if not spec.perturbations:
        return 1.0
    return max(term.truncation_radius(delta, tol) for term in spec.perturbations
               if term.amplitude != 0) if spec.has_perturbation else 1.0


def resolve_quadrature(spec: OperatorSpec, delta: float, quad: QuadratureConfig = None,
                       lams=()) -> QuadratureConfig:
    """Fill in ``L`` and ``panel_width``; the width resolves ``exp(mu (t-s))`` for all ``lams``.

    With an automatic width and constant coefficients the mesh is graded:
    ``CORE_WIDTH`` panels where the weighted perturbation exceeds
    ``CORE_TOL`` (the Nystrom error is proportional to the local kernel
    size) and, outside, panels of integer width up to ``TAIL_CAP`` limited
    by the kernel rates ``|mu|`` and ``tau``.
    """
    quad = quad or QuadratureConfig()
    L = quad.L if quad.L is not None else truncation_length(spec, delta, quad.trunc_tol)
    w = quad.panel_width
    if w is None:
        scale = 0.0
        for z in lams:
            mu = principal_log(multiplicators(spec, z))
            scale = max(scale, float(np.max(np.abs(mu))))
        w = resolve_panel_width(spec, scale)
        if quad.core_width is None and w > CORE_WIDTH and spec.has_perturbation:
            r = math.ceil(min(L, truncation_length(spec, delta, CORE_TOL)))
            w = snap_panel_width(2.0 / max(scale, spec.tau), TAIL_CAP)
            quad = quad.with_(core_width=CORE_WIDTH, core_radius=float(r))
    return quad.with_(L=L, panel_width=w)


@dataclass(frozen=True)
class BSMatrix:
    lam: complex
    branch: BranchTag
    grid: object
    active: np.ndarray
    Q: np.ndarray
    det_val: complex
    logdet: complex
    quad: QuadratureConfig = None
    trace_correction: complex = 0j
    _parts: tuple = field(default=None, repr=False, compare=False)

    @property
    def diagonal_trace(self) -> complex:
        """Quadrature of the kernel diagonal, the trace used by ``det_val``."""
        return complex(np.trace(self.Q)) + self.trace_correction

    @property
    def size(self) -> int:
        return self.Q.shape[0]

    def singular_values(self):
        return np.linalg.svd(self.Q, compute_uv=False) if self.size else np.zeros(0)

    def full_matrix(self) -> np.ndarray:
        """The ``(n N) x (n N)`` block matrix acting on vector-valued ``phi``.

        Entry ``[(i, a), (j, b)]`` is ``exp(-delta|t_i|) [int M(t_i, s) e_n ell_j(s)
        exp(delta|s|) ds]_a q_b(s_j)``.  With the same kernel-diagonal
        trace, ``det(I + F) exp(tr_diag - tr F)`` approximates ``det_val``
        (the two rules differ only on the diagonal panels).  Intended for
        small grids.
        """
        spec, sampler, mask = self._parts
        g = self.grid
        n = spec.order
        delta = self.branch.delta
        blocks = []
        for a in range(n):
            row = np.zeros((g.N, n))
            row[:, a] = 1.0
            blocks.append(assemble_operator(
                sampler, g, row, mask,
                col_scale=lambda s: np.exp(delta * np.abs(s)),
                row_scale=lambda t: np.exp(-delta * np.abs(t))))
        q = np.stack([spec.q(k, g.nodes) for k in range(n)], axis=1)
        out = np.zeros((g.N, n, g.N, n), dtype=complex)
        for a in range(n):
            out[:, a, :, :] = blocks[a][:, :, None] * q[None, :, :]
        return out.reshape(g.N * n, g.N * n)


def _core(quad):
    return None if quad.core_width is None else (quad.core_radius, quad.core_width)


def _assemble(spec, lam, mask_fn, delta, quad, tol):
    """Reduced Nystrom matrix and the trace correction ``sum k(t_i, t_i) w_i - tr K``."""
    grid = make_grid(quad.L, quad.panel_width, quad.nodes_per_panel, spec.breakpoints, _core(quad))
    n = spec.order
    q = np.stack([spec.q(k, grid.nodes) for k in range(n)], axis=1)
    active = np.nonzero(np.any(q != 0, axis=1))[0]
    if len(active) == 0:
        return grid, active, np.zeros((0, 0), dtype=complex), 0j, None, None
    sampler = FloquetSampler(spec, lam, tol)
    mask = mask_fn(sampler)
    # weights swap sides relative to the block form: q now sits on the row
    # side and exp(delta|t|) q(t) M(t, s) exp(-delta|s|) stays bounded
    K = assemble_operator(sampler, grid, q, mask, m_sub=quad.sub_nodes,
                          col_scale=lambda s: np.exp(-delta * np.abs(s)),
                          row_scale=lambda t: np.exp(delta * np.abs(t)))
    K = K[np.ix_(active, active)]
    diag = kernel_diagonal(sampler, grid.nodes[active], q[active], mask) * grid.weights[active]
    return grid, active, K, complex(diag.sum() - np.trace(K)), sampler, mask


def build_Q(spec: OperatorSpec, lam, branch: BranchTag, quad: QuadratureConfig = None,
            tol: float = DEFAULT_TOL) -> BSMatrix:
    """Nystrom matrix of the continued Birman-Schwinger operator at ``lam``."""
    lam = complex(lam)
    quad = resolve_quadrature(spec, branch.delta, quad, (lam,))
    if spec.has_perturbation:
        v = branch.violation(spec, lam)
        if v >= 0:
            raise OutsideContinuationRegion(lam, v)
    grid, active, Q, corr, sampler, mask = _assemble(
        spec, lam, lambda smp: branch.stable_mask(spec, lam, smp.rho), branch.delta, quad, tol)
    logdet, det_val = _logdet(Q, corr)
    return BSMatrix(lam, branch, grid, active, Q, det_val, logdet, quad, corr,
                    (spec, sampler, mask))


def _logdet(Q, corr):
    """``log det(I + Q) + corr``: the regularized determinant times ``exp`` of the exact-rule trace.

    Product integration resolves the diagonal kink of the kernel when
    acting on functions but puts an ``O(h)`` error in ``tr Q``; replacing
    that trace by the quadrature of the kernel diagonal leaves
    ``det_2(I + Q)``, which converges at the rate of the off-diagonal rule.
    """
    if Q.size == 0:
        return 0j, 1.0 + 0j
    sign, logabs = np.linalg.slogdet(np.eye(len(Q)) + Q)
    if not np.isfinite(logabs):
        return complex(-np.inf), 0j
    logdet = complex(logabs) + 1j * float(np.angle(sign)) + corr
    return logdet, complex(np.exp(logdet))


def bs_determinant(spec: OperatorSpec, lam, branch: BranchTag, quad: QuadratureConfig = None,
                   tol: float = DEFAULT_TOL) -> complex:
    return build_Q(spec, lam, branch, quad, tol).det_val


def naive_determinant(spec: OperatorSpec, lam, delta: float = None, quad: QuadratureConfig = None,
                      tol: float = DEFAULT_TOL) -> complex:
    """Determinant with the sign partition at ``lam`` itself (no continuation)."""
    lam = complex(lam)
    delta = default_delta(spec) if delta is None else delta
    quad = resolve_quadrature(spec, delta, quad, (lam,))

    def mask_fn(smp):
        if smp.critical():
            raise CriticalExponents(f"lambda={lam!r} has critical exponents")
        return smp.sign_mask

    _, _, Q, corr, _, _ = _assemble(spec, lam, mask_fn, delta, quad, tol)
    return _logdet(Q, corr)[1]


# --- root counting and location ----------------------------------------------

def fd_step(lam) -> float:
    return 1e-5 * (1.0 + abs(lam))


class Determinant:
    """``d(lam)`` for a fixed spec, branch and discretization, with memoization."""

    def __init__(self, spec, branch, quad, tol=DEFAULT_TOL):
        self.spec, self.branch, self.quad, self.tol = spec, branch, quad, tol
        self.cache = {}
        self.evaluations = 0

    def __call__(self, lam):
        lam = complex(lam)
        if lam not in self.cache:
            self.cache[lam] = build_Q(self.spec, lam, self.branch, self.quad, self.tol).det_val
            self.evaluations += 1
        return self.cache[lam]

    def derivative(self, lam):
        h = fd_step(lam)
        return (self(lam + h) - self(lam - h)) / (2 * h)


def _contour_moments(det: Determinant, rect: Rectangle, nodes: int):
    z, dz = rect.contour(nodes)
    d = np.array([det(x) for x in z])
    dp = np.array([det.derivative(x) for x in z])
    f = dp / d * dz
    s0 = f.sum() / (2j * np.pi)
    s1 = (z * f).sum() / (2j * np.pi)
    return s0, s1, float(np.min(np.abs(d))), float(np.max(np.abs(d)))


def _winding(det, rect, nodes, floor=1e-8, refine=4, nudges=3):
    """Winding number with contour refinement and nudging; returns ``(k, s1, rect)``."""
    r = rect
    for attempt in range(nudges + 1):
        k = nodes
        while True:
            s0, s1, dmin, dmax = _contour_moments(det, r, k)
            if dmin <= floor * max(1.0, dmax):
                break  # a root sits (nearly) on the contour
            w = round(s0.real)
            if abs(s0 - w) <= 1e-3:
                return int(w), s1, r
            if k >= nodes * refine:
                raise ContourTooCoarse(complex(s0), k)
            k *= 2
        # grow the rectangle slightly away from the offending root
        pad = 0.02 * (attempt + 1) * max(r.width, r.height)
        r = r.grown(pad)
    raise ContourTooCoarse(complex(s0), k)


def count_roots(spec: OperatorSpec, branch: BranchTag, region: Rectangle, contour_nodes: int = 128,
                quad: QuadratureConfig = None, orientation: int = 1, tol: float = DEFAULT_TOL) -> int:
    """Winding number of ``d`` around ``region`` (counter-clockwise; ``orientation=-1`` reverses)."""
    quad = resolve_quadrature(spec, branch.delta, quad, region.corners)
    det = Determinant(spec, branch, quad, tol)
    k, _, _ = _winding(det, region, contour_nodes)
    return orientation * k


@dataclass
class RootInfo:
    lam: complex             # original coordinates
    lam_normalized: complex
    residual: float
    stable: bool
    moved: float
    on_spectrum: bool = False
    multiplicity: int = 1


@dataclass
class EigenReport:
    region: Rectangle        # original coordinates
    winding: int
    roots: list
    clusters: list
    branch: BranchTag
    lambda_map: LambdaMap
    quad: QuadratureConfig = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "metadata": self.metadata,
            "region": self.region.to_dict(),
            "winding": self.winding,
            "lambda_map": {"scale": self.lambda_map.scale},
            "roots": [{"re": r.lam.real, "im": r.lam.imag, "residual": r.residual,
                       "stable": r.stable, "moved": r.moved, "on_spectrum": r.on_spectrum,
                       "multiplicity": r.multiplicity} for r in self.roots],
            "clusters": [{"region": c[0].to_dict(), "winding": c[1]} for c in self.clusters],
            "branch": self.branch.to_dict() if self.branch is not None else None,
            "quadrature": self.quad.to_dict() if self.quad is not None else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k in sorted(self.metadata):
            buf.write(f"# {k}: {json.dumps(self.metadata[k], sort_keys=True)}\n")
        if "schema_version" not in self.metadata:
            buf.write(f"# schema_version: {json.dumps(SCHEMA_VERSION)}\n")
        buf.write(f"# winding: {self.winding}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("re", "im", "residual", "stable", "on_spectrum", "multiplicity"))
        for r in self.roots:
            w.writerow((repr(r.lam.real), repr(r.lam.imag), repr(r.residual),
                        int(r.stable), int(r.on_spectrum), r.multiplicity))
        return buf.getvalue()


def polish(det: Determinant, lam0, target: float = 1e-10, maxit: int = 50):
    """Newton iteration on ``d``; returns ``(lam, |d(lam)|)``."""
    lam = complex(lam0)
    val = det(lam)
    for _ in range(maxit):
        if abs(val) <= target:
            break
        dp = det.derivative(lam)
        if dp == 0 or not np.isfinite(dp):
            break
        step = val / dp
        lam = lam - step
        val = det(lam)
        if abs(step) <= 1e-15 * (1 + abs(lam)):
            break
    return lam, float(abs(val))


def find_eigenvalues(spec: OperatorSpec, branch: BranchTag, region: Rectangle, contour_nodes: int = 128,
                     quad: QuadratureConfig = None, max_depth: int = 12, refine: float = 1.5,
                     lambda_map: LambdaMap = None, tol: float = DEFAULT_TOL) -> EigenReport:
    """Locate the roots of ``d`` in ``region`` (normalized coordinates).

    Cells are subdivided until each holds one root (winding 1); the root is
    estimated from the first contour moment and Newton-polished.  A root is
    grid stable when re-polishing with ``refine`` times as many quadrature
    nodes moves it by less than 1e-4.
    """
    lmap = lambda_map or spec.lambda_map
    raw_region = lmap.rect_to_raw(region)
    if not spec.has_perturbation:
        return EigenReport(raw_region, 0, [], [], branch, lmap)
    quad = resolve_quadrature(spec, branch.delta, quad, region.corners)
    det = Determinant(spec, branch, quad, tol)
    fine = Determinant(spec, branch, quad.refined(refine), tol)
    total, s1, _ = _winding(det, region, contour_nodes)
    roots, clusters = [], []

    def visit(cell, k, s1, depth):
        if k == 0:
            return
        if k < 0:
            clusters.append((lmap.rect_to_raw(cell), k))
            return
        if k == 1:
            guess = s1 if cell.grown(0.1 * max(cell.width, cell.height)).contains(s1) else cell.center
            lam, res = polish(det, guess)
            if cell.grown(1e-6 * (1 + abs(lam))).contains(lam) and res <= 1e-6:
                lam_f, _ = polish(fine, lam, target=0.0, maxit=20)
                moved = abs(lam_f - lam)
                roots.append(_root_info(spec, lmap, lam, res, moved))
                return
        if depth >= max_depth:
            clusters.append((lmap.rect_to_raw(cell), k))
            return
        for sub in cell.split():
            kk, ss, _ = _winding(det, sub, contour_nodes, nudges=0)
            visit(sub, kk, ss, depth + 1)

    visit(region, total, s1, 0)
    roots = _dedupe(roots)
    roots.sort(key=lambda r: (r.lam.real, r.lam.imag))
    return EigenReport(raw_region, total, roots, clusters, branch, lmap, quad)


def _dedupe(roots, tol=1e-8):
    out = []
    for r in roots:
        for o in out:
            if abs(o.lam - r.lam) <= tol * (1 + abs(r.lam)):
                o.multiplicity += 1
                break
        else:
            out.append(r)
    return out


def _root_info(spec, lmap, lam, res, moved):
    rho = multiplicators(spec.periodic_part(), lam)
    on = bool(np.min(np.abs(np.abs(rho) - 1.0)) <= 1e-6)
    raw = complex(lmap.to_raw(lam))
    return RootInfo(raw, lam, res, bool(moved < 1e-4), float(moved), on)


def cauchy_riemann_residual(f, lam, h: float = 1e-4) -> float:
    """``|f_x + i f_y| / (|f_x| + |f_y|)`` by centered differences (0 for analytic ``f``)."""
    lam = complex(lam)
    fx = (f(lam + h) - f(lam - h)) / (2 * h)
    fy = (f(lam + 1j * h) - f(lam - 1j * h)) / (2 * h)
    den = abs(fx) + abs(fy)
    return 0.0 if den == 0 else float(abs(fx + 1j * fy) / den)
