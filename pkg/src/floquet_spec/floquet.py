"""Floquet factorization, band membership and band-curve tracing."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from floquet_spec.errors import DefectiveExponents, UnsupportedOrder
from floquet_spec.ode_core import DEFAULT_TOL, TOL_C, monodromy, propagate_samples
from floquet_spec.operator_model import OperatorSpec
from floquet_spec.regions import Rectangle

COND_MAX = 1e8


def _branch_cut_angle(rho) -> float:
    """Rotation angle moving every eigenvalue away from the negative real axis."""
    args = np.sort(np.angle(rho))
    # widest angular gap; put the cut in its middle
    ext = np.concatenate([args, [args[0] + 2 * np.pi]])
    k = int(np.argmax(np.diff(ext)))
    cut = 0.5 * (ext[k] + ext[k + 1])
    # principal cut sits at angle pi; rotate so that it lands on `cut`
    return float(np.angle(np.exp(1j * (cut - np.pi))))


def floquet_log(U1, return_angle: bool = False):
    """Matrix logarithm ``Gamma`` with ``expm(Gamma) = U1``.

    Uses the Schur-based principal logarithm.  When an eigenvalue of ``U1``
    lies on (or within 1e-12 of) the closed negative real axis the branch
    cut is rotated by an angle ``alpha``: ``Gamma = log(exp(-i alpha) U1) +
    i alpha I``.  With ``return_angle`` the angle (0.0 when unrotated) is
    returned as well, and a nonzero angle flags the result.
    """
    U1 = np.asarray(U1, dtype=complex)
    rho = np.linalg.eigvals(U1)
    on_cut = np.any((np.abs(np.angle(rho)) > np.pi - 1e-12) | (np.abs(rho) == 0))
    alpha = _branch_cut_angle(rho) if on_cut else 0.0
    if alpha == 0.0:
        G = sla.logm(U1)
    else:
        G = sla.logm(np.exp(-1j * alpha) * U1) + 1j * alpha * np.eye(len(U1))
    G = np.asarray(G, dtype=complex)
    return (G, alpha) if return_angle else G


def order_exponents(mu):
    """Indices sorting exponents by descending real part, ties by descending imaginary part."""
    mu = np.asarray(mu)
    return np.lexsort((-mu.imag, -np.round(mu.real, 12)))


@dataclass(frozen=True)
class FloquetDecomposition:
    lam: complex
    Gamma: np.ndarray
    grid: np.ndarray
    F_grid: np.ndarray
    exponents: np.ndarray
    G: np.ndarray
    split_index: int
    condition_number: float
    branch_angle: float = 0.0
    critical: bool = False
    U1: np.ndarray = None
    _spline: object = field(default=None, repr=False, compare=False)

    @property
    def flagged(self) -> bool:
        return self.critical or self.branch_angle != 0.0

    @property
    def Ginv(self):
        return np.linalg.inv(self.G)

    def expGamma(self, t):
        """``exp(t Gamma)`` through the eigendecomposition."""
        d = np.exp(np.multiply.outer(np.atleast_1d(np.asarray(t, dtype=float)), self.exponents))
        out = np.einsum("ij,tj,jk->tik", self.G, d, self.Ginv)
        return out[0] if np.ndim(t) == 0 else out

    def F(self, t):
        """Periodic interpolation of the sampled ``F``."""
        tau = np.mod(np.asarray(t, dtype=float), 1.0)
        return self._spline(tau)

    def projection(self, stable: bool = True, mask=None):
        """Spectral projection onto the stable (``Re mu < 0``) or unstable exponents.

        ``mask`` overrides the sign-based selection with a boolean stable mask
        in the order of ``exponents``.
        """
        if mask is None:
            mask = self.exponents.real < 0
        mask = np.asarray(mask, dtype=bool)
        sel = mask if stable else ~mask
        return (self.G[:, sel] @ self.Ginv[sel, :]).astype(complex)


def floquet_factor(spec: OperatorSpec, lam, grid_size: int = 256, tol: float = DEFAULT_TOL,
                   check_defective: bool = True) -> FloquetDecomposition:
    """Factor ``U(t) = F(t) exp(t Gamma)`` with ``F`` sampled on ``grid_size + 1`` points."""
    lam = complex(lam)
    grid = np.linspace(0.0, 1.0, grid_size + 1)
    U, _ = propagate_samples(spec, lam, grid[1:], tol)
    U = np.concatenate([np.eye(spec.order, dtype=complex)[None], U])
    U1 = U[-1]
    Gamma, alpha = floquet_log(U1, return_angle=True)
    mu, G = np.linalg.eig(Gamma)
    order = order_exponents(mu)
    mu, G = mu[order], G[:, order]
    G = G / np.linalg.norm(G, axis=0)
    cond = float(np.linalg.cond(G))
    if check_defective and cond > COND_MAX:
        raise DefectiveExponents(lam, cond)
    dec = FloquetDecomposition(lam, Gamma, grid, None, mu, G, int(np.sum(mu.real > TOL_C)),
                               cond, alpha, bool(np.any(np.abs(mu.real) <= TOL_C)), U1)
    if cond <= COND_MAX:
        E = dec.expGamma(-grid)
    else:
        E = np.array([sla.expm(-t * Gamma) for t in grid])
    F = np.einsum("tij,tjk->tik", U, E)
    F[-1] = F[0]  # exact periodicity for the spline; the defect is tested separately
    spline = CubicSpline(grid, F, axis=0, bc_type="periodic")
    object.__setattr__(dec, "F_grid", F)
    object.__setattr__(dec, "_spline", spline)
    return dec


@dataclass(frozen=True)
class Membership:
    inside: bool
    margin: float

    @property
    def outside(self) -> bool:
        return not self.inside


def spectrum_membership(spec: OperatorSpec, lam, tol: float = 1e-6,
                        ode_tol: float = DEFAULT_TOL) -> Membership:
    """``margin = min_k ||rho_k| - 1|``; inside the continuous spectrum iff ``margin <= tol``."""
    m = monodromy(spec, lam, ode_tol)
    margin = m.margin
    return Membership(bool(margin <= tol), margin)


def discriminant(spec: OperatorSpec, lam, tol: float = DEFAULT_TOL) -> complex:
    """Trace of the monodromy matrix (second-order operators only)."""
    if spec.order != 2:
        raise UnsupportedOrder(f"discriminant needs order 2, got {spec.order}")
    return complex(np.trace(monodromy(spec, lam, tol).U1))


# --- band tracing ------------------------------------------------------------

@dataclass
class BandCurve:
    theta_grid: np.ndarray
    points: np.ndarray
    residuals: np.ndarray
    branch_id: int = 0
    termination: tuple = ()

    def to_rows(self):
        for th, z, r in zip(self.theta_grid, self.points, self.residuals):
            yield (float(th), float(z.real), float(z.imag), float(r), self.branch_id)

    def to_dict(self) -> dict:
        return {
            "branch_id": self.branch_id,
            "termination": list(self.termination),
            "theta": [float(x) for x in self.theta_grid],
            "re_lambda": [float(z.real) for z in self.points],
            "im_lambda": [float(z.imag) for z in self.points],
            "residual": [float(r) for r in self.residuals],
        }


BAND_CSV_HEADER = ("theta", "re_lambda", "im_lambda", "residual", "branch_id")


def bands_to_csv(curves, metadata: dict = None) -> str:
    buf = io.StringIO()
    if metadata:
        for k in sorted(metadata):
            buf.write(f"# {k}: {json.dumps(metadata[k], sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BAND_CSV_HEADER)
    for c in curves:
        for row in c.to_rows():
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def bands_to_json(curves, metadata: dict = None) -> str:
    doc = {"schema_version": "1", "metadata": metadata or {},
           "curves": [c.to_dict() for c in curves]}
    return json.dumps(doc, indent=2, sort_keys=True)


class _BandEquation:
    """``g(lam) = det(U(1, lam) - exp(i theta) I)`` with finite-difference derivatives."""

    def __init__(self, spec, tol):
        self.spec = spec
        self.tol = tol
        self.cache = {}

    def U1(self, lam):
        key = complex(lam)
        if key not in self.cache:
            if len(self.cache) > 4096:
                self.cache.clear()
            U, _ = propagate_samples(self.spec, key, [1.0], self.tol)
            self.cache[key] = U[0]
        return self.cache[key]

    def g(self, lam, theta):
        U = self.U1(lam)
        n = len(U)
        M = U - np.exp(1j * theta) * np.eye(n)
        scale = (1.0 + np.linalg.norm(U, 2)) ** n
        return complex(np.linalg.det(M)), scale

    def newton(self, lam, theta, maxit=60, accept=1e-8):
        """Newton in ``lam`` at fixed ``theta``.

        Returns ``(lam, scaled residual, ok, dlam_dtheta, other)`` where
        ``other`` estimates the distance to the nearest other root,
        ``|2 g' / g''|`` (``inf`` when ``g`` is locally linear).
        """
        lam = complex(lam)
        for _ in range(maxit):
            g, scale = self.g(lam, theta)
            h = 1e-6 * (1.0 + abs(lam))
            dg = (self.g(lam + h, theta)[0] - self.g(lam - h, theta)[0]) / (2 * h)
            if not np.isfinite(dg) or dg == 0:
                break
            step = g / dg
            lam = lam - step
            if abs(step) <= 1e-13 * (1.0 + abs(lam)):
                break
        g, scale = self.g(lam, theta)
        ok = bool(np.isfinite(g) and abs(g) <= accept * scale)
        h = 1e-4 * (1.0 + abs(lam))
        gp, gm = self.g(lam + h, theta)[0], self.g(lam - h, theta)[0]
        d1 = (gp - gm) / (2 * h)
        d2 = (gp - 2 * g + gm) / h ** 2
        eta = 1e-6
        dth = (self.g(lam, theta + eta)[0] - self.g(lam, theta - eta)[0]) / (2 * eta)
        slope = -dth / d1 if d1 != 0 else 0j
        other = abs(2 * d1 / d2) if d2 != 0 else math.inf
        return lam, abs(g) / scale, ok, complex(slope), other


def _scan_margin(spec, window: Rectangle, shape, tol):
    nr, ni = shape
    re = np.linspace(window.re0, window.re1, nr)
    im = np.linspace(window.im0, window.im1, ni) if window.height > 0 else np.array([window.im0])
    marg = np.empty((len(im), len(re)))
    for i, y in enumerate(im):
        for j, x in enumerate(re):
            marg[i, j] = monodromy(spec, complex(x, y), tol).margin
    return re, im, marg


def _valley_points(marg):
    """Grid points that are minima along the row or along the column.

    Plain 2-d minima miss bands along which the margin decreases
    monotonically; valley points sample the whole band.
    """
    padded = np.pad(marg, 1, constant_values=np.inf)
    c = padded[1:-1, 1:-1]
    along_im = (c <= padded[:-2, 1:-1]) & (c <= padded[2:, 1:-1])
    along_re = (c <= padded[1:-1, :-2]) & (c <= padded[1:-1, 2:])
    if marg.shape[0] == 1:
        along_im = np.zeros_like(along_im)
    return np.argwhere(along_im | along_re)


def _on_circle_angle(spec, lam, tol):
    rho = monodromy(spec, lam, tol).multiplicators
    k = int(np.argmin(np.abs(np.abs(rho) - 1.0)))
    return float(np.angle(rho[k]))


def _segment_distance(p, curve_pts):
    """Distance from ``p`` to a polyline."""
    if len(curve_pts) == 1:
        return abs(p - curve_pts[0])
    a, b = curve_pts[:-1], curve_pts[1:]
    ab = b - a
    den = np.abs(ab) ** 2
    s = np.where(den > 0, ((p - a) * np.conj(ab)).real / np.where(den > 0, den, 1), 0.0)
    s = np.clip(s, 0.0, 1.0)
    return float(np.min(np.abs(a + s * ab - p)))


def band_structure(spec: OperatorSpec, window: Rectangle, theta_count: int = 256, seeds=None,
                   tol: float = DEFAULT_TOL, scan_shape=(100, 100), max_turns: float = 8.0,
                   pad: float = 1e-9):
    """Trace ``det(U(1, lam) - exp(i theta) I) = 0`` inside ``window``.

    Each branch is continued in ``theta`` along the real line on a uniform
    grid of step ``2 pi / theta_count`` anchored at 0 (band edges of real
    data sit at ``theta`` = 0 and pi).  A branch stops at the window
    boundary (located by bisection in ``theta``), on Newton failure, when it
    closes after a full turn, or after ``max_turns`` turns.

    Parameters
    ----------
    seeds : iterable of complex, optional
        Starting guesses.  By default local minima of the multiplicator
        margin on a ``scan_shape`` grid over the window are used.
    pad : float
        Relative slack for window containment (so that real bands count as
        inside a window with zero height).
    """
    window = window if isinstance(window, Rectangle) else Rectangle(*window)
    eq = _BandEquation(spec, tol)
    dtheta = 2 * np.pi / theta_count
    max_steps = int(np.ceil(max_turns * theta_count))

    def inside(z):
        return window.contains(z, pad * (1.0 + abs(z)))

    if seeds is None:
        re, im, marg = _scan_margin(spec, window, scan_shape, tol)
        cand = _valley_points(marg)
        vals = marg[cand[:, 0], cand[:, 1]]
        keep = vals < 0.5
        cand, vals = cand[keep], vals[keep]
        order = np.argsort(vals, kind="stable")
        seeds = [complex(re[j], im[i]) for i, j in cand[order]]
        spacing = max(re[1] - re[0] if len(re) > 1 else 0.0, im[1] - im[0] if len(im) > 1 else 0.0)
    else:
        seeds = [complex(s) for s in seeds]
        spacing = 0.0

    curves = []
    for seed in seeds[:400]:
        if any(_segment_distance(seed, c.points) <= 1.5 * spacing for c in curves):
            continue
        theta0 = _on_circle_angle(spec, seed, tol)
        lam0, res0, ok, slope0, _ = eq.newton(seed, theta0)
        if not ok or not inside(lam0):
            continue
        if any(_segment_distance(lam0, c.points) <= _dedupe_radius(c, lam0) for c in curves):
            continue
        curve = _trace(eq, lam0, theta0, res0, slope0, dtheta, max_steps, inside)
        if curve is not None:
            curve.branch_id = len(curves)
            curves.append(curve)
    return curves


def _dedupe_radius(curve, z):
    d = np.abs(np.diff(curve.points))
    if len(d) == 0:
        return 1e-6 * (1 + abs(z))
    k = int(np.argmin(np.abs(curve.points[:-1] - z)))
    return 0.6 * d[k] + 1e-6 * (1 + abs(z))


def _predict(thetas, lams, slopes, th):
    """Cubic Hermite extrapolation from the last two points (linear from one)."""
    x1, y1, d1 = thetas[-1], lams[-1], slopes[-1]
    if len(lams) < 2:
        return y1 + d1 * (th - x1)
    x0, y0, d0 = thetas[-2], lams[-2], slopes[-2]
    hh = x1 - x0
    s = (th - x0) / hh
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    return h00 * y0 + h10 * hh * d0 + h01 * y1 + h11 * hh * d1


def _trace(eq, lam0, theta0, res0, slope0, dtheta, max_steps, inside, min_dtheta=1e-9):
    halves = []
    reasons = []
    closed = False
    for direction in (1.0, -1.0):
        if closed:
            break
        thetas, lams, res, slopes = [theta0], [lam0], [res0], [slope0]
        # first grid point strictly past theta0 in this direction
        k = math.floor(theta0 / dtheta) + 1 if direction > 0 else math.ceil(theta0 / dtheta) - 1
        turn = theta0 + direction * 2 * np.pi
        reason = "span"
        steps = 0
        while steps < max_steps and reason == "span":
            target = k * dtheta
            if direction * (target - turn) > 1e-12 and direction * (thetas[-1] - turn) < -1e-12:
                target = turn
            sub = target - thetas[-1]
            if len(thetas) >= 2:
                # grow the step at most twofold so the predictor never extrapolates far
                last = abs(thetas[-1] - thetas[-2])
                if abs(sub) > 2 * last:
                    sub = direction * 2 * last
            while True:
                th = thetas[-1] + sub
                guess = _predict(thetas, lams, slopes, th)
                lam, r, ok, slope, other = eq.newton(guess, th)
                tiny = 1e-6 * (1 + abs(lam))
                if ok and (abs(lam - guess) <= 0.25 * other or other <= tiny
                           or abs(lam - guess) <= tiny):
                    break
                # the corrector left the basin of the predicted root: shorten the step
                sub *= 0.5
                if abs(sub) < min_dtheta:
                    ok = False
                    break
            if not ok:
                reason = "newton"
                break
            if not inside(lam):
                b = _bisect_boundary(eq, thetas[-1], lams[-1], th, lam, inside)
                if b is not None:
                    thetas.append(b[0])
                    lams.append(b[1])
                    res.append(b[2])
                reason = "window"
                break
            if other > tiny and slopes[-1] != 0 and (slope * np.conj(slopes[-1])).real < 0:
                # the curve folds back between the two steps (a band edge off the grid)
                f = _refine_fold(eq, thetas[-1], lams[-1], slopes[-1], th, lam)
                if f is not None and inside(f[1]):
                    thetas.append(f[0])
                    lams.append(f[1])
                    res.append(f[2])
                    slopes.append(f[3])
            thetas.append(th)
            lams.append(lam)
            res.append(r)
            # at a double root (closed gap) the implicit slope is 0/0: keep the previous one
            slopes.append(slopes[-1] if other <= tiny else slope)
            if th == turn and abs(lam - lam0) <= 1e-7 * (1 + abs(lam0)):
                closed = True
                reason = "closed"
                break
            if th == k * dtheta:
                k += int(direction)
                steps += 1
        halves.append((thetas, lams, res))
        reasons.append(reason)
    fwd = halves[0]
    if len(halves) > 1:
        bwd = halves[1]
        thetas = bwd[0][::-1] + fwd[0][1:]
        lams = bwd[1][::-1] + fwd[1][1:]
        res = bwd[2][::-1] + fwd[2][1:]
    else:
        thetas, lams, res = fwd
    if len(lams) < 2:
        return None
    return BandCurve(np.array(thetas), np.array(lams, dtype=complex), np.array(res),
                     termination=tuple(reasons))


def _refine_fold(eq, th_a, lam_a, s_a, th_b, lam_b, iters=40):
    """Point between two steps where ``dlam/dtheta`` turns against ``s_a`` (bisection)."""
    best = None
    for _ in range(iters):
        th = 0.5 * (th_a + th_b)
        lam, r, ok, slope, _ = eq.newton(0.5 * (lam_a + lam_b), th)
        if not ok:
            return best
        best = (th, lam, r, slope)
        if (slope * np.conj(s_a)).real > 0:
            th_a, lam_a = th, lam
        else:
            th_b, lam_b = th, lam
        if abs(th_b - th_a) <= 1e-10:
            break
    return best


def _bisect_boundary(eq, th_in, lam_in, th_out, lam_out, inside, iters=60):
    """Last in-window point between an inside and an outside continuation step."""
    best = None
    for _ in range(iters):
        th = 0.5 * (th_in + th_out)
        guess = lam_in + (lam_out - lam_in) * 0.5
        lam, r, ok, _, _ = eq.newton(guess, th)
        if not ok:
            break
        if inside(lam):
            th_in, lam_in, best = th, lam, (th, lam, r)
        else:
            th_out, lam_out = th, lam
        if abs(lam_out - lam_in) <= 1e-9 * (1 + abs(lam_in)):
            break
    return best


# --- set distances -----------------------------------------------------------

def curve_intervals(curves, imag_tol: float = 1e-6):
    """Real intervals covered by curves whose points are all within ``imag_tol`` of the axis."""
    out = []
    for c in curves:
        pts = np.asarray(c.points)
        if np.max(np.abs(pts.imag)) > imag_tol * (1 + np.max(np.abs(pts))):
            raise ValueError("curve is not real")
        out += [(float(x), float(y)) for x, y in zip(pts.real[:-1], pts.real[1:])]
    return merge_intervals(out)


def merge_intervals(intervals, gap: float = 0.0):
    ivs = sorted((min(a, b), max(a, b)) for a, b in intervals)
    merged = []
    for a, b in ivs:
        if merged and a <= merged[-1][1] + gap:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def _dist_to_union(x, ivs):
    return min(0.0 if a <= x <= b else min(abs(x - a), abs(x - b)) for a, b in ivs)


def _directed_interval_hausdorff(A, B):
    """``sup_{x in A} dist(x, B)`` for finite unions of closed intervals."""
    if not A:
        return 0.0
    if not B:
        return math.inf
    cand = []
    for a, b in A:
        cand += [a, b]
        # distance to B is maximal inside gaps of B at their midpoints
        for (_, e1), (s2, _) in zip(B[:-1], B[1:]):
            m = 0.5 * (e1 + s2)
            if a <= m <= b:
                cand.append(m)
    return max(_dist_to_union(x, B) for x in cand)


def interval_hausdorff(A, B) -> float:
    """Exact Hausdorff distance between two finite unions of real intervals."""
    A, B = merge_intervals(A), merge_intervals(B)
    return max(_directed_interval_hausdorff(A, B), _directed_interval_hausdorff(B, A))


def densify(curves, max_seg: float):
    """Points along polylines with spacing at most ``max_seg``."""
    out = []
    for c in curves:
        p = np.asarray(c.points if hasattr(c, "points") else c, dtype=complex)
        out.append(p[:1])
        for a, b in zip(p[:-1], p[1:]):
            m = max(1, int(np.ceil(abs(b - a) / max_seg)))
            out.append(a + (b - a) * np.arange(1, m + 1) / m)
    return np.concatenate(out) if out else np.zeros(0, dtype=complex)


def point_hausdorff(P, Q) -> float:
    """Hausdorff distance between finite point sets in the plane."""
    P = np.asarray(P, dtype=complex)
    Q = np.asarray(Q, dtype=complex)
    if len(P) == 0 or len(Q) == 0:
        return 0.0 if len(P) == len(Q) else math.inf
    a = np.column_stack([P.real, P.imag])
    b = np.column_stack([Q.real, Q.imag])
    d1 = cKDTree(b).query(a)[0].max()
    d2 = cKDTree(a).query(b)[0].max()
    return float(max(d1, d2))

