import numpy as np
import pytest

from floquet_spec.errors import CriticalExponents, TruncationError
from floquet_spec.quadrature import QuadratureConfig
from floquet_spec.resolvent import (GridFunction, apply_resolvent, green_kernel, green_kernel_eval,
                                    resolvent_residual)


def test_free_green_kernel_closed_form(free):
    K = green_kernel(free, 1.0)
    for t, s in [(0.3, -1.2), (-2.0, 0.5), (1.7, 1.1)]:
        # (u'' - u) = f  ->  u = -1/2 int exp(-|t - s|) f
        assert green_kernel_eval(K, t, s)[0, 1] == pytest.approx(-0.5 * np.exp(-abs(t - s)), rel=1e-9)


def test_green_kernel_jump_is_identity(hill):
    K = green_kernel(hill, 2.0 + 1.0j)
    jump = green_kernel_eval(K, 0.4 + 1e-12, 0.4) - green_kernel_eval(K, 0.4 - 1e-12, 0.4)
    assert np.allclose(jump, np.eye(2), atol=1e-8)


def test_critical_lambda_rejected(free):
    with pytest.raises(CriticalExponents):
        green_kernel(free, -4.0)


def test_resolvent_recovers_known_solution(free):
    quad = QuadratureConfig(L=10.0, nodes_per_panel=12)
    u_exact = GridFunction.from_function(lambda t: np.exp(-t ** 2), quad, free)
    # (d^2 - 1) exp(-t^2) = (4 t^2 - 3) exp(-t^2)
    v = GridFunction.from_function(lambda t: (4 * t ** 2 - 3) * np.exp(-t ** 2), quad, free)
    u = apply_resolvent(free, 1.0, v, quad)
    assert np.max(np.abs(u.values - u_exact.values)) <= 1e-10


def test_resolvent_linearity(hill):
    quad = QuadratureConfig(L=8.0, nodes_per_panel=12)
    v1 = GridFunction.from_function(lambda t: np.exp(-t ** 2), quad, hill)
    v2 = GridFunction.from_function(lambda t: t * np.exp(-2 * t ** 2), quad, hill)
    lam = 3.0 - 2.0j
    lhs = apply_resolvent(hill, lam, (0.5 - 1j) * v1 + v2, quad)
    rhs = (0.5 - 1j) * apply_resolvent(hill, lam, v1, quad) + apply_resolvent(hill, lam, v2, quad)
    assert np.max(np.abs(lhs.values - rhs.values)) <= 1e-10 * np.max(np.abs(lhs.values))


def test_zero_input(hill):
    quad = QuadratureConfig(L=4.0)
    v = GridFunction.from_function(lambda t: 0 * t, quad, hill)
    assert not np.any(apply_resolvent(hill, 2.0, v, quad).values)


def test_non_decaying_input_rejected(hill):
    quad = QuadratureConfig(L=4.0)
    v = GridFunction.from_function(lambda t: np.exp(-0.1 * t ** 2), quad, hill)
    with pytest.raises(TruncationError):
        apply_resolvent(hill, 2.0, v, quad)


def test_residual_of_hill_resolvent(hill):
    quad = QuadratureConfig(L=12.0, nodes_per_panel=12)
    v = GridFunction.from_function(lambda t: (1 + t) * np.exp(-t ** 2), quad, hill)
    u = apply_resolvent(hill, 2.0 + 1.0j, v, quad)
    assert resolvent_residual(hill, 2.0 + 1.0j, v, u, quad) <= 1e-5
