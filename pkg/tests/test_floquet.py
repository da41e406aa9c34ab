import json

import numpy as np
import pytest

from floquet_spec.errors import UnsupportedOrder
from floquet_spec.floquet import (band_structure, bands_to_csv, bands_to_json, curve_intervals, densify,
                                  discriminant, floquet_factor, floquet_log, interval_hausdorff,
                                  order_exponents, point_hausdorff, spectrum_membership)
from floquet_spec.ode_core import propagate
from floquet_spec.operator_model import FourierCoefficient, OperatorSpec
from floquet_spec.regions import Rectangle
import scipy.linalg as sla


def test_factorization_identity(hill):
    lam = -3.0 + 0.7j
    dec = floquet_factor(hill, lam)
    ts = [0.13, 0.5, 0.77, 1.0]
    M = propagate(hill, lam, 1.0, grid=ts)
    for t, U in zip(M.grid[1:], M.values[1:]):
        assert np.linalg.norm(U - dec.F(t) @ dec.expGamma(t)) <= 1e-8 * np.linalg.norm(U)
    assert np.allclose(dec.F(0.3), dec.F(1.3))


def test_log_rotates_branch_cut():
    U = np.diag([-2.0, 0.5]).astype(complex)
    G, alpha = floquet_log(U, return_angle=True)
    assert alpha != 0.0
    assert np.allclose(sla.expm(G), U, atol=1e-12)


def test_exponent_order():
    mu = np.array([-1 + 1j, 2 - 1j, 2 + 1j])
    assert list(order_exponents(mu)) == [2, 1, 0]


def test_projections_are_complementary(hill):
    dec = floquet_factor(hill, 3.0)
    P1, P2 = dec.projection(True), dec.projection(False)
    assert np.allclose(P1 + P2, np.eye(2)) and np.allclose(P1 @ P1, P1, atol=1e-10)


def test_membership(free):
    assert spectrum_membership(free, -4.0).inside
    m = spectrum_membership(free, 1.0)
    assert m.outside and m.margin == pytest.approx(1 - np.exp(-1), rel=1e-10)


def test_discriminant_hill_band_edges(hill):
    # band edges where the discriminant equals +-2
    assert abs(discriminant(hill, 0.0506037)) == pytest.approx(2.0, abs=1e-4)
    with pytest.raises(UnsupportedOrder):
        discriminant(OperatorSpec(3, ()), 1.0)


def test_free_band_small_window(free):
    curves = band_structure(free, Rectangle(-12.0, 3.0, -1.0, 1.0), theta_count=128)
    ivs = curve_intervals(curves)
    assert interval_hausdorff(ivs, [(-12.0, 0.0)]) <= 1e-6


def test_empty_window_gives_no_curves(free):
    assert band_structure(free, Rectangle(1.0, 3.0, 0.5, 1.0), scan_shape=(20, 20)) == []


def test_first_order_band_is_a_parabola():
    # u'' + 0.5 u' with u = exp(i k t): lam = -k^2 + 0.5 i k
    spec = OperatorSpec(2, ((), (FourierCoefficient(0, 0.5),)))
    curves = band_structure(spec, Rectangle(-10.0, 1.0, -2.0, 2.0), theta_count=128)
    k = np.linspace(-np.sqrt(10), np.sqrt(10), 20001)
    exact = -k ** 2 + 0.5j * k
    assert point_hausdorff(densify(curves, 1e-3), exact) <= 1e-3


def test_imaginary_first_order_band_is_real():
    spec = OperatorSpec(2, ((), (FourierCoefficient(0, 0.5j),)))
    curves = band_structure(spec, Rectangle(-10.0, 1.0, -2.0, 2.0), theta_count=128)
    assert interval_hausdorff(curve_intervals(curves), [(-10.0, 1 / 16)]) <= 1e-6


def test_band_exports_have_schema_and_header(free):
    curves = band_structure(free, Rectangle(-5.0, 1.0, -1.0, 1.0), theta_count=64)
    doc = json.loads(bands_to_json(curves, {"k": 1}))
    assert doc["schema_version"] == "1" and doc["curves"]
    text = bands_to_csv(curves, {"k": 1})
    assert text.startswith("# k: 1\ntheta,re_lambda,im_lambda,residual,branch_id\n")


def test_interval_hausdorff_exact():
    assert interval_hausdorff([(0, 1), (3, 4)], [(0, 4)]) == pytest.approx(1.0)
    assert interval_hausdorff([(0, 1)], [(0, 1)]) == 0.0
