# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled propagation kernel for the companion matriciant.

Same algorithm and step control as ``_pykernels.propagate_companion``.
"""
import numpy as np

from libc.math cimport cos, sin, fabs, pow

from floquet_spec.errors import StepSizeUnderflow

cdef double SAFETY = 0.9
cdef double FAC_MIN = 0.2
cdef double FAC_MAX = 5.0

cdef double[7] _C
cdef double[7][7] _A
cdef double[7] _E

_C[:] = [0.0, 1 / 5., 3 / 10., 4 / 5., 8 / 9., 1.0, 1.0]
_E[:] = [71 / 57600., 0.0, -71 / 16695., 71 / 1920., -17253 / 339200., 22 / 525., -1 / 40.]

cdef int _i, _j
for _i in range(7):
    for _j in range(7):
        _A[_i][_j] = 0.0
_A[1][0] = 1 / 5.
_A[2][0] = 3 / 40.
_A[2][1] = 9 / 40.
_A[3][0] = 44 / 45.
_A[3][1] = -56 / 15.
_A[3][2] = 32 / 9.
_A[4][0] = 19372 / 6561.
_A[4][1] = -25360 / 2187.
_A[4][2] = 64448 / 6561.
_A[4][3] = -212 / 729.
_A[5][0] = 9017 / 3168.
_A[5][1] = -355 / 33.
_A[5][2] = 46732 / 5247.
_A[5][3] = 49 / 176.
_A[5][4] = -5103 / 18656.
_A[6][0] = 35 / 384.
_A[6][2] = 500 / 1113.
_A[6][3] = 125 / 192.
_A[6][4] = -2187 / 6784.
_A[6][5] = 11 / 84.


cdef inline double cabs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


cdef void _rhs(int n, int J, double[:, ::1] w, double complex[:, ::1] coef,
               double complex lam, double t, double complex[:, ::1] U,
               double complex[:, ::1] out, double complex[::1] row) nogil:
    cdef int k, j, r, c
    cdef double complex acc, cf
    cdef double ph
    for k in range(n):
        acc = 0
        for j in range(J):
            cf = coef[k, j]
            if cf.real != 0.0 or cf.imag != 0.0:
                ph = w[k, j] * t
                acc = acc + cf * (cos(ph) + 1j * sin(ph))
        row[k] = -acc
    row[0] = row[0] + lam
    for r in range(n - 1):
        for c in range(n):
            out[r, c] = U[r + 1, c]
    for c in range(n):
        acc = 0
        for j in range(n):
            acc = acc + row[j] * U[j, c]
        out[n - 1, c] = acc


def propagate_companion(harm, coef, lam, double t0, stops, double tol, double h_init=0.0):
    """Integrate ``U' = A(t, lam) U`` from ``U(t0) = I``; sample at ``stops``."""
    harm_arr = np.asarray(harm)
    cdef int n = harm_arr.shape[0]
    cdef int J = harm_arr.shape[1]
    cdef double[:, ::1] w = np.ascontiguousarray(2.0 * np.pi * harm_arr, dtype=np.float64)
    cdef double complex[:, ::1] cf = np.ascontiguousarray(coef, dtype=np.complex128)
    cdef double complex lamc = complex(lam)
    cdef double[::1] st = np.ascontiguousarray(stops, dtype=np.float64)
    cdef int nst = st.shape[0]
    out_arr = np.empty((nst, n, n), dtype=np.complex128)
    if nst == 0:
        return out_arr, 0
    cdef double complex[:, :, ::1] out = out_arr

    cdef double complex[:, ::1] U = np.eye(n, dtype=np.complex128)
    cdef double complex[:, ::1] Y = np.empty((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] Unew = np.empty((n, n), dtype=np.complex128)
    cdef double complex[:, :, ::1] ks = np.empty((7, n, n), dtype=np.complex128)
    cdef double complex[:, ::1] k1 = np.empty((n, n), dtype=np.complex128)
    cdef double complex[::1] row = np.empty(n, dtype=np.complex128)

    cdef double direction = 1.0 if st[nst - 1] >= t0 else -1.0
    cdef double t = t0
    cdef double h, step, hs, span, t_stop, err, e, scale, mag, fac
    cdef bint clipped
    cdef int idx, s, j, r, c
    cdef long nsteps = 0
    cdef double complex acc

    _rhs(n, J, w, cf, lamc, t, U, k1, row)
    if h_init > 0:
        h = h_init
    else:
        mag = 0.0
        for r in range(n):
            for c in range(n):
                e = cabs2(k1[r, c])
                if e > mag:
                    mag = e
        mag = mag ** 0.5
        h = 0.01 / (mag if mag > 1.0 else 1.0)

    for idx in range(nst):
        t_stop = st[idx]
        while direction * (t_stop - t) > 0:
            span = fabs(t_stop - t)
            clipped = h >= span
            step = span if clipped else h
            if step < 1e-13 * (fabs(t) if fabs(t) > 1.0 else 1.0):
                raise StepSizeUnderflow(t)
            hs = direction * step
            ks[0, :, :] = k1
            for s in range(1, 7):
                for r in range(n):
                    for c in range(n):
                        acc = U[r, c]
                        for j in range(s):
                            if _A[s][j] != 0.0:
                                acc = acc + (hs * _A[s][j]) * ks[j, r, c]
                        Y[r, c] = acc
                _rhs(n, J, w, cf, lamc, t + _C[s] * hs, Y, ks[s], row)
            # stage 6 argument is the 5th-order solution (FSAL)
            err = 0.0
            for r in range(n):
                for c in range(n):
                    Unew[r, c] = Y[r, c]
                    acc = 0
                    for j in range(7):
                        if _E[j] != 0.0:
                            acc = acc + (hs * _E[j]) * ks[j, r, c]
                    mag = cabs2(U[r, c])
                    e = cabs2(Y[r, c])
                    if e > mag:
                        mag = e
                    scale = tol * (mag ** 0.5 if mag > 1.0 else 1.0)
                    e = cabs2(acc) ** 0.5 / scale
                    if e > err:
                        err = e
            if err <= 1.0:
                t = t_stop if clipped else t + hs
                U[:, :] = Unew
                k1[:, :] = ks[6]
                nsteps += 1
                if err == 0.0:
                    fac = FAC_MAX
                else:
                    fac = SAFETY * pow(err, -0.2)
                    if fac > FAC_MAX:
                        fac = FAC_MAX
                if not clipped:
                    h = step * fac
                elif fac < 1.0 and step * fac < h:
                    h = step * fac
            else:
                fac = SAFETY * pow(err, -0.2)
                if fac < FAC_MIN:
                    fac = FAC_MIN
                h = step * fac
        out[idx, :, :] = U
    return out_arr, nsteps
