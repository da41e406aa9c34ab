"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest -v tests/test_acceptance.py`` (the lines are repeated in
the terminal summary) or directly as ``python3 tests/test_acceptance.py``.
"""
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from floquet_spec.birman_schwinger import (bs_determinant, cauchy_riemann_residual, count_roots,
                                           find_eigenvalues, make_branch, naive_determinant,
                                           resolve_quadrature)
from floquet_spec.floquet import (band_structure, curve_intervals, floquet_factor, interval_hausdorff,
                                  spectrum_membership)
from floquet_spec.ode_core import liouville_determinant, propagate
from floquet_spec.operator_model import FourierCoefficient, OperatorSpec, load_spec, normalize
from floquet_spec.oracle_fd import bloch_intervals, converged_eigenvalues
from floquet_spec.quadrature import QuadratureConfig
from floquet_spec.regions import Rectangle
from floquet_spec.resolvent import GridFunction, apply_resolvent, resolvent_residual

sys.path.insert(0, str(Path(__file__).resolve().parent))
from conftest import record  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def check(criterion, ok, detail):
    record(criterion, bool(ok), detail)
    assert ok, detail


def test_criterion_1_floquet_identities():
    rng = np.random.default_rng(1)
    worst_f = worst_l = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 4))
        coeffs = []
        for _k in range(n):
            J = int(rng.integers(0, 3))
            coeffs.append(tuple(FourierCoefficient(m, complex(*rng.normal(0, 0.5, 2)))
                                for m in range(-J, J + 1)))
        spec = OperatorSpec(n, tuple(coeffs), 1.0)
        lam = complex(*rng.uniform(-4, 4, 2))
        dec = floquet_factor(spec, lam)
        ts = np.sort(rng.uniform(0, 1, 16))
        M = propagate(spec, lam, 1.0, grid=ts)
        for t, U in zip(M.grid[1:], M.values[1:]):
            worst_f = max(worst_f, np.linalg.norm(U - dec.F(t) @ dec.expGamma(t)) / np.linalg.norm(U))
            L = liouville_determinant(spec, lam, t)
            worst_l = max(worst_l, abs(np.linalg.det(U) - L) / abs(L))
    check(1, worst_f <= 1e-8 and worst_l <= 1e-8,
          f"50 random (spec, lambda): factorization {worst_f:.2e}, Liouville {worst_l:.2e} (limit 1e-8)")


def test_criterion_2_band_oracles(free, hill):
    W = Rectangle(-50.0, 10.0, -1.0, 1.0)
    free_err = interval_hausdorff(curve_intervals(band_structure(free, W)), [(-50.0, 0.0)])
    Wh = Rectangle(-80.0, 5.0, -1.0, 1.0)
    ivs = curve_intervals(band_structure(hill, Wh))
    ref = bloch_intervals(hill, window=Wh)
    hill_err = interval_hausdorff(ivs, ref)
    check(2, free_err <= 1e-6 and hill_err <= 1e-3,
          f"free vs (-inf,0]: {free_err:.2e} (limit 1e-6); Hill vs Bloch oracle: "
          f"{hill_err:.2e} (limit 1e-3), {len(ref)} bands")


def test_criterion_3_resolvent_composition(free, hill):
    rng = np.random.default_rng(3)
    quad = QuadratureConfig(L=12.0, nodes_per_panel=12)
    inputs = [lambda t: np.exp(-t ** 2), lambda t: (1 + t) * np.exp(-t ** 2),
              lambda t: np.cos(3 * t) * np.exp(-0.8 * t ** 2)]
    worst, done = 0.0, 0
    while done < 20:
        spec = (free, hill)[done % 2]
        lam = complex(rng.uniform(-15, 5), rng.choice([-1, 1]) * rng.uniform(0.2, 4))
        if spectrum_membership(spec, lam).margin < 1e-3:
            continue
        v = GridFunction.from_function(inputs[done % 3], quad, spec)
        u = apply_resolvent(spec, lam, v, quad)
        worst = max(worst, resolvent_residual(spec, lam, v, u, quad))
        done += 1
    check(3, worst <= 1e-5, f"20 random admissible lambda (free and Hill): worst relative "
                           f"residual {worst:.2e} (limit 1e-5)")


def test_criterion_4_poschl_teller():
    raw = load_spec(CONFIGS / "poschl_teller.json")
    spec, lmap = normalize(raw)
    region = lmap.rect_to_normalized(Rectangle(-2.5, -0.1, -1.0, 1.0))
    br = make_branch(spec, complex(region.re1, region.im1))
    rep = find_eigenvalues(spec, br, region, lambda_map=lmap)
    fd = converged_eigenvalues(raw, window=Rectangle(-2.5, -0.1, -1.0, 1.0))
    roots = [r.lam for r in rep.roots]
    ok = (rep.winding == 1 and len(roots) == 1 and abs(roots[0] + 1) <= 1e-4
          and len(fd) == 1 and abs(fd[0] - roots[0]) <= 1e-4)
    detail = (f"winding {rep.winding}, roots {[f'{z.real:.10f}{z.imag:+.1e}i' for z in roots]}, "
              f"FD two-resolution {[f'{z.real:.7f}' for z in fd]} (limit 1e-4 from -1)")
    check(4, ok, detail)


def _square_well_oracle():
    # depth 1, half-width 1: k = sqrt(1 + E), kappa = sqrt(-E)
    even = lambda E: np.sqrt(1 + E) * np.sin(np.sqrt(1 + E)) - np.sqrt(-E) * np.cos(np.sqrt(1 + E))
    # odd parity: -k cot k = kappa, written with sinc so k = 0 (u = 0) is not a root
    odd = lambda E: np.cos(np.sqrt(1 + E)) + np.sqrt(-E) * np.sinc(np.sqrt(1 + E) / np.pi)
    grid = np.linspace(-1.0, -1e-12, 4001)
    roots = []
    for f in (even, odd):
        v = f(grid)
        for a, b, fa, fb in zip(grid[:-1], grid[1:], v[:-1], v[1:]):
            if fa == 0:
                roots.append(a)
            elif fa * fb < 0:
                roots.append(brentq(f, a, b, xtol=1e-15))
    return sorted(roots)


def test_criterion_5_square_well():
    raw = load_spec(CONFIGS / "square_well.json")
    spec, lmap = normalize(raw)
    raw_region = Rectangle(-1.0, -0.05, -0.3, 0.3)
    region = lmap.rect_to_normalized(raw_region)
    br = make_branch(spec, complex(region.re1, region.im1))
    rep = find_eigenvalues(spec, br, region, lambda_map=lmap)
    roots = sorted(r.lam.real for r in rep.roots)
    oracle = _square_well_oracle()
    ok = (len(roots) == len(oracle) == rep.winding and all(raw_region.contains(E) for E in oracle)
          and all(abs(a - b) <= 1e-6 for a, b in zip(roots, oracle))
          and all(abs(r.lam.imag) <= 1e-6 for r in rep.roots))
    err = max((abs(a - b) for a, b in zip(roots, oracle)), default=float("nan"))
    check(5, ok, f"roots {[f'{E:.10f}' for E in roots]} vs oracle {[f'{E:.10f}' for E in oracle]}, "
                 f"max error {err:.2e} (limit 1e-6)")


def test_criterion_6_complex_perturbation_winding():
    raw = load_spec(CONFIGS / "complex_exp.json")
    spec, lmap = normalize(raw)
    R = Rectangle(-0.35, -0.05, -0.25, 0.1)
    br = make_branch(spec, complex(R.re0, R.im0))
    quad = resolve_quadrature(spec, br.delta, None, R.corners)
    k_base = count_roots(spec, br, R, 128, quad)
    k_contour = count_roots(spec, br, R, 256, quad)
    k_quad = count_roots(spec, br, R, 128, quad.refined(1.5))
    rep = find_eigenvalues(spec, br, R, 128, quad, lambda_map=lmap)
    n_roots = sum(r.multiplicity for r in rep.roots)
    ok = k_base == k_contour == k_quad == rep.winding == n_roots and not rep.clusters
    check(6, ok, f"winding {k_base} (contour x2: {k_contour}, quadrature x1.5: {k_quad}), "
                 f"{n_roots} polished root(s) {[f'{r.lam:.8f}' for r in rep.roots]}")


def test_criterion_7_analytic_continuation(poschl_teller):
    spec = poschl_teller
    rng = np.random.default_rng(7)
    br = make_branch(spec, -2.0 + 0.5j)
    quad = resolve_quadrature(spec, br.delta, None, (-3.0 + 0.5j, -3.0 - 0.5j, -1.0 + 0.5j))
    upper = [complex(rng.uniform(-3, -1), rng.uniform(0.05, 0.5)) for _ in range(10)]
    lower = [complex(rng.uniform(-3, -1), -rng.uniform(0.05, 0.5)) for _ in range(10)]
    f = lambda z: bs_determinant(spec, z, br, quad)
    cr = [cauchy_riemann_residual(f, z) for z in upper + lower]
    agree = [abs(f(z) - naive_determinant(spec, z, br.delta, quad)) / abs(f(z)) for z in upper]
    ok = max(cr) <= 1e-5 and max(agree) <= 1e-10
    check(7, ok, f"CR residual seed side {max(cr[:10]):.2e}, far side {max(cr[10:]):.2e} (limit 1e-5); "
                 f"naive agreement on seed side {max(agree):.2e} (limit 1e-10)")


def test_criterion_8_null_cases(free, hill):
    lams = [-2.0 + 0.5j, -2.0 - 0.5j, 1.0, 3.0 + 2.0j]
    br = make_branch(free, -2.0 + 0.5j)
    dev = max(abs(bs_determinant(free, z, br) - 1) for z in lams)
    rects = [Rectangle(0.5, 1.5, -0.5, 0.5), Rectangle(-3.0, -1.0, 0.1, 1.0)]
    windings = [count_roots(free, make_branch(free, complex(R.re1, R.im1)), R, 32) for R in rects]
    hill_br = make_branch(hill, 1.0 + 0.5j)
    hill_d = abs(bs_determinant(hill, 1.0 + 0.5j, hill_br) - 1)
    reports = [find_eigenvalues(free, make_branch(free, 1.0), rects[0], 32).roots,
               find_eigenvalues(hill, hill_br, Rectangle(0.3, 2.0, 0.2, 1.0), 32).roots]
    fd = [converged_eigenvalues(free), converged_eigenvalues(hill)]
    ok = dev == 0.0 and hill_d == 0.0 and windings == [0, 0] and all(not r for r in reports + fd)
    check(8, ok, f"|d - 1| {max(dev, hill_d):.1e}, windings {windings}, "
                 f"BS roots {[len(r) for r in reports]}, FD eigenvalues {[len(r) for r in fd]}")


def test_criterion_9_cli_determinism(tmp_path):
    runs = [("bands", "hill.json", "-2,6,-0.5,0.5", "json"),
            ("eigs", "square_well.json", "-0.9,-0.1,-0.3,0.3", "csv"),
            ("oracle", "poschl_teller.json", "-2,-0.5,-0.5,0.5", "json")]
    same = []
    for cmd, cfg, window, fmt in runs:
        outs = []
        for k in range(2):
            prefix = tmp_path / f"{cmd}{k}"
            subprocess.run([sys.executable, "-m", "floquet_spec.cli", cmd, "--spec", str(CONFIGS / cfg),
                            f"--window={window}", "--format", fmt, "--out", str(prefix),
                            "--contour-nodes", "64", "--theta-count", "64"],
                           check=True, capture_output=True)
            outs.append((tmp_path / f"{cmd}{k}.{fmt}").read_bytes())
        same.append(outs[0] == outs[1])
    check(9, all(same), f"byte-identical repeated runs: {dict(zip([r[0] for r in runs], same))}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
