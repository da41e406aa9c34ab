import numpy as np
import pytest

from floquet_spec.errors import SpecError
from floquet_spec.quadrature import (QuadratureConfig, differentiation_matrices, make_grid, product_rule,
                                     resolve_panel_width, snap_panel_width)


def test_grid_integrates_smooth_functions():
    g = make_grid(6.0, 0.25, 8, (0.0,))
    assert np.sum(g.weights * np.exp(-g.nodes ** 2)) == pytest.approx(np.sqrt(np.pi), rel=1e-12)


def test_panels_aligned_and_split_at_breakpoints():
    g = make_grid(2.0, 0.5, 4, (0.3,))
    assert 0.3 in np.round(g.edges, 12) and 1.5 in g.edges
    assert g.N == 4 * (len(g.edges) - 1)


def test_product_rule_handles_kink():
    m = 8
    xi, om, lag = product_rule(m, m)
    x = np.polynomial.legendre.leggauss(m)[0]
    r = 3
    # integrate |s - x_r| * p(s) for p = 1 + s : exact via sympy-free antiderivative
    f = np.abs(xi[r] - x[r])
    approx = np.sum(om[r] * f * (lag[r] @ (1 + x)))
    s = np.linspace(-1, 1, 2000001)
    exact = np.trapezoid(np.abs(s - x[r]) * (1 + s), s)
    assert approx == pytest.approx(exact, rel=1e-8)


def test_differentiation_matrices_exact_on_polynomials():
    D = differentiation_matrices(6, 2)
    x = np.polynomial.legendre.leggauss(6)[0]
    assert np.allclose(D[1] @ x ** 3, 3 * x ** 2)
    assert np.allclose(D[2] @ x ** 4, 12 * x ** 2)


def test_snap_and_resolve(free, hill):
    assert snap_panel_width(0.3) == 0.25
    assert resolve_panel_width(hill) == 0.25
    assert resolve_panel_width(free) == 1.0
    assert resolve_panel_width(free, lam_scale=30.0) == pytest.approx(1 / 15)


def test_config_validation():
    with pytest.raises(SpecError):
        QuadratureConfig(panel_width=0.3)
    assert QuadratureConfig(nodes_per_panel=8).refined(1.5).nodes_per_panel == 12
