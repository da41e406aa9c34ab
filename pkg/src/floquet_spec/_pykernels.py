"""Pure-Python (numpy) propagation kernel for the companion matriciant.

Mirrors ``_ckernels.pyx`` step for step; used when the compiled extension is
unavailable or disabled with ``FLOQUET_SPEC_PURE_PYTHON=1``.
"""
import numpy as np

from floquet_spec.errors import StepSizeUnderflow

# Dormand-Prince 5(4) tableau (FSAL).
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0


def _last_row(w, coef, lam, t):
    a = (coef * np.exp(w * t)).sum(axis=1)
    row = -a
    row[0] += lam
    return row


def _rhs(w, coef, lam, t, U):
    n = U.shape[0]
    out = np.empty_like(U)
    if n > 1:
        out[:-1] = U[1:]
    out[-1] = _last_row(w, coef, lam, t) @ U
    return out


def propagate_companion(harm, coef, lam, t0, stops, tol, h_init=0.0):
    """Integrate ``U' = A(t, lam) U`` from ``U(t0) = I`` and sample at ``stops``.

    Parameters
    ----------
    harm : (n, J) int array
        Harmonic indices of the periodic coefficients ``a_0 .. a_{n-1}``.
    coef : (n, J) complex array
        Matching Fourier amplitudes (zero-padded).
    lam : complex
        Spectral parameter.
    t0 : float
        Start time.
    stops : 1-d float array
        Output times, monotone and moving away from ``t0`` (either direction).
    tol : float
        Local error tolerance per accepted step (mixed absolute/relative).

    Returns
    -------
    values : (len(stops), n, n) complex array
    nsteps : int
        Accepted steps.
    """
    harm = np.asarray(harm)
    coef = np.asarray(coef, dtype=complex)
    n = harm.shape[0]
    w = 2j * np.pi * harm
    lam = complex(lam)
    stops = np.asarray(stops, dtype=float)
    out = np.empty((len(stops), n, n), dtype=complex)
    if len(stops) == 0:
        return out, 0

    direction = 1.0 if stops[-1] >= t0 else -1.0
    t = float(t0)
    U = np.eye(n, dtype=complex)
    k1 = _rhs(w, coef, lam, t, U)
    if h_init > 0:
        h = h_init
    else:
        h = 0.01 / max(1.0, float(np.abs(k1).max()))
    nsteps = 0
    ks = [None] * 7

    for idx, t_stop in enumerate(stops):
        while direction * (t_stop - t) > 0:
            span = abs(t_stop - t)
            clipped = h >= span
            step = span if clipped else h
            if step < 1e-13 * max(1.0, abs(t)):
                raise StepSizeUnderflow(t)
            hs = direction * step
            ks[0] = k1
            for s in range(1, 7):
                Y = U.copy()
                for j, a in enumerate(_A[s]):
                    if a != 0.0:
                        Y += (hs * a) * ks[j]
                ks[s] = _rhs(w, coef, lam, t + _C[s] * hs, Y)
            # stage 6 argument is the 5th-order solution (FSAL)
            U_new = Y
            k7 = ks[6]
            E = np.zeros_like(U)
            for j, e in enumerate(_E):
                if e != 0.0:
                    E += (hs * e) * ks[j]
            scale = tol * np.maximum(1.0, np.maximum(np.abs(U), np.abs(U_new)))
            err = float((np.abs(E) / scale).max())
            if err <= 1.0:
                t = t_stop if clipped else t + hs
                U = U_new
                k1 = k7
                nsteps += 1
                fac = FAC_MAX if err == 0.0 else min(FAC_MAX, SAFETY * err ** -0.2)
                if not clipped:
                    h = step * fac
                elif fac < 1.0:
                    h = min(h, step * fac)
            else:
                h = step * max(FAC_MIN, SAFETY * err ** -0.2)
        out[idx] = U
    return out, nsteps
