import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from floquet_spec import kernels
from floquet_spec.errors import SpecError
from floquet_spec.ode_core import (classify, cluster_multiplicities, liouville_determinant, monodromy,
                                   principal_log, propagate)
from floquet_spec.operator_model import FourierCoefficient, OperatorSpec


def test_free_monodromy_at_minus_pi_squared(free):
    m = monodromy(free, -np.pi ** 2)
    assert np.allclose(m.U1, -np.eye(2), atol=1e-10)
    assert m.multiplicities[0][1] == 2


def test_free_multiplicators_at_one(free):
    m = monodromy(free, 1.0)
    rho = np.sort(m.multiplicators.real)
    assert np.allclose(rho, [np.exp(-1), np.e], rtol=1e-11)
    assert sorted(m.classification) == ["stable", "unstable"]


def test_free_critical_double_multiplicator(free):
    m = monodromy(free, -4 * np.pi ** 2)
    assert m.classification == ("critical", "critical")
    assert cluster_multiplicities(m.multiplicators)[0][1] == 2
    assert m.margin < 1e-9


def test_matriciant_solves_the_ode(hill):
    # finite-difference check of U' = A U at interior samples
    lam = 1.5 + 0.5j
    h = 1e-4
    ts = np.array([0.3 - h, 0.3, 0.3 + h])
    U = propagate(hill, lam, 1.0, grid=ts).values[1:]
    dU = (U[2] - U[0]) / (2 * h)
    from floquet_spec.operator_model import companion_matrix
    assert np.allclose(dU, companion_matrix(hill, lam, 0.3) @ U[1], atol=1e-6)


def test_liouville_identity_third_order():
    spec = OperatorSpec(3, ((FourierCoefficient(1, 0.3j),), (), (FourierCoefficient(0, 0.7),
                                                                 FourierCoefficient(1, 0.2))))
    M = propagate(spec, 0.4 - 1.1j, 1.0, grid=[0.25, 0.5, 1.0])
    for t, U in zip(M.grid[1:], M.values[1:]):
        L = liouville_determinant(spec, 0.4 - 1.1j, t)
        assert abs(np.linalg.det(U) - L) <= 1e-10 * abs(L)


@pytest.mark.parametrize("tol", [1e-15, 1e-5])
def test_tolerance_range(free, tol):
    with pytest.raises(SpecError):
        propagate(free, 1.0, tol=tol)


def test_principal_log_maps_negative_axis_to_plus_pi():
    mu = principal_log(np.array([complex(-1.0, -0.0)]))
    assert mu[0].imag == pytest.approx(np.pi)


def test_classify_tolerance():
    assert classify(np.array([-1e-10, 2e-9, -1.0])) == ("critical", "unstable", "stable")


@pytest.mark.skipif(kernels.compiled_propagate_companion() is None, reason="compiled kernel not built")
@settings(max_examples=25, deadline=None)
@given(st.floats(-30, 30), st.floats(-10, 10), st.floats(-1, 1), st.floats(-1, 1))
def test_backends_agree(lr, li, c1, c2):
    spec = OperatorSpec(2, ((FourierCoefficient(-1, c1), FourierCoefficient(1, c1)),
                            (FourierCoefficient(2, 1j * c2),)))
    harm, coef = spec.coefficient_arrays()
    stops = np.array([0.1, 0.5, 1.0, 2.5])
    fast = kernels.compiled_propagate_companion()(harm, coef, complex(lr, li), 0.0, stops, 1e-12)[0]
    slow = kernels.python_propagate_companion(harm, coef, complex(lr, li), 0.0, stops, 1e-12)[0]
    scale = np.linalg.norm(slow, axis=(1, 2), keepdims=True)
    assert np.max(np.abs(fast - slow) / scale) <= 1e-9
