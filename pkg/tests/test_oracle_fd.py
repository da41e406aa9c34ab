import numpy as np
import pytest

from floquet_spec.errors import SpecError
from floquet_spec.operator_model import PerturbationTerm, free_operator
from floquet_spec.oracle_fd import (FDConfig, bloch_bands, bloch_intervals, converged_eigenvalues,
                                    eigenvalues_to_csv, fd_eigenvalues, fornberg_weights)


def test_fornberg_second_derivative():
    w = fornberg_weights(0.0, [-1.0, 0.0, 1.0], 2)
    assert np.allclose(w[2], [1, -2, 1]) and np.allclose(w[1], [-0.5, 0, 0.5])


def test_free_dirichlet_eigenvalues(free):
    cfg = FDConfig(L=2.0, N=200)
    ev = np.sort(fd_eigenvalues(free, cfg).real)[::-1]
    k = np.arange(1, 4)
    assert np.allclose(ev[:3], -(k * np.pi / (2 * cfg.L)) ** 2, rtol=1e-6)


def test_config_rejects_coarse_grid():
    with pytest.raises(SpecError):
        FDConfig(L=10.0, N=100)


def test_poschl_teller_converged_in_raw_coordinates():
    raw = free_operator(2, -1.0, [PerturbationTerm(0, "sech_sq", -2.0)])
    vals = converged_eigenvalues(raw)
    assert len(vals) == 1 and abs(vals[0] + 1) <= 1e-4
    assert "re,im,L,N" in eigenvalues_to_csv(vals, FDConfig())


def test_free_operator_has_no_converged_eigenvalues(free):
    assert converged_eigenvalues(free_operator(2, -1.0)) == []
    # already-normalized input: no second coordinate flip
    assert converged_eigenvalues(free) == []


def test_bloch_free_bands(free):
    th = np.array([0.3])
    ev = bloch_bands(free, th, M=9)
    # u'' on exp(i (theta + 2 pi m) t): -(theta + 2 pi m)^2
    m = np.arange(-4, 5)
    assert np.allclose(np.sort(ev[0].real), np.sort(-(0.3 + 2 * np.pi * m) ** 2))


def test_bloch_intervals_hill(hill):
    ivs = bloch_intervals(hill)
    assert ivs[0] == pytest.approx((-8.857099, 0.050604), abs=1e-5)
