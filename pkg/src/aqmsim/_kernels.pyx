# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: adaptive Dormand-Prince integration of a linear
complex ODE and a telegraph-process photon-counting Monte Carlo."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, fabs, pow
from libc.stdint cimport uint64_t

cnp.import_array()

cdef double[7][6] A = [
    [0, 0, 0, 0, 0, 0],
    [1.0 / 5, 0, 0, 0, 0, 0],
    [3.0 / 40, 9.0 / 40, 0, 0, 0, 0],
    [44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0],
    [19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0],
    [9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0],
    [35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84],
]
cdef double[7] B5 = [35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784,
                     11.0 / 84, 0]
cdef double[7] B4 = [5179.0 / 57600, 0, 7571.0 / 16695, 393.0 / 640,
                     -92097.0 / 339200, 187.0 / 2100, 1.0 / 40]


cdef inline void _matvec(const double complex[:, ::1] L, const double complex[::1] x,
                         double complex[::1] out, Py_ssize_t n) nogil:
    cdef Py_ssize_t i, j
    cdef double complex acc
    for i in range(n):
        acc = 0
        for j in range(n):
            acc = acc + L[i, j] * x[j]
        out[i] = acc


def dopri5(L, y0, double t, double rtol, double atol, double h0, long max_steps):
    cdef double complex[:, ::1] Lv = np.ascontiguousarray(L, dtype=np.complex128)
    y_arr = np.array(y0, dtype=np.complex128)
    cdef double complex[::1] y = y_arr
    cdef Py_ssize_t n = y.shape[0]
    if t <= 0.0:
        return y_arr, 0, 0, 0.0
    k_arr = np.empty((7, n), dtype=np.complex128)
    cdef double complex[:, ::1] k = k_arr
    tmp_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] tmp = tmp_arr
    ynew_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] ynew = ynew_arr
    cdef double h = t if h0 <= 0 else (h0 if h0 < t else t)
    cdef double time = 0.0, err_norm = 0.0, scale, e_abs, ya, yb, factor
    cdef double complex acc, err
    cdef long accepted = 0, rejected = 0
    cdef int s, r
    cdef Py_ssize_t i
    with nogil:
        _matvec(Lv, y, k[0], n)
        while time < t:
            if accepted + rejected >= max_steps:
                accepted = -1
                break
            if h > t - time:
                h = t - time
            for s in range(1, 7):
                for i in range(n):
                    acc = y[i]
                    for r in range(s):
                        acc = acc + h * A[s][r] * k[r, i]
                    tmp[i] = acc
                _matvec(Lv, tmp, k[s], n)
            err_norm = 0.0
            for i in range(n):
                acc = y[i]
                err = 0
                for r in range(7):
                    acc = acc + h * B5[r] * k[r, i]
                    err = err + h * (B5[r] - B4[r]) * k[r, i]
                ynew[i] = acc
                ya = abs(y[i])
                yb = abs(acc)
                scale = atol + rtol * (ya if ya > yb else yb)
                e_abs = abs(err) / scale
                err_norm += e_abs * e_abs
            err_norm = sqrt(err_norm / n)
            if err_norm <= 1.0:
                time += h
                for i in range(n):
                    y[i] = ynew[i]
                    k[0, i] = k[6, i]
                accepted += 1
                if err_norm == 0.0:
                    factor = 5.0
                else:
                    factor = 0.9 * pow(err_norm, -0.2)
                    if factor > 5.0:
                        factor = 5.0
            else:
                rejected += 1
                factor = 0.9 * pow(err_norm, -0.2)
                if factor < 0.2:
                    factor = 0.2
            h *= factor
    return y_arr, accepted, rejected, err_norm


cdef inline uint64_t _splitmix(uint64_t* state) nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t* state) nogil:
    # (0, 1], never zero so that -log(u) is finite
    return ((_splitmix(state) >> 11) + 1.0) * (1.0 / 9007199254740992.0)


def telegraph_no_photon(long n_trials, double detect_rate, double bg_rate,
                        double r_dark, double r_bright, double t,
                        bint start_bright, unsigned long long seed):
    cdef uint64_t state = seed
    cdef long trial, dark_count = 0
    cdef double time, emit, switch, total, dwell
    cdef bint bright
    with nogil:
        for trial in range(n_trials):
            time = 0.0
            bright = start_bright
            while True:
                emit = bg_rate + (detect_rate if bright else 0.0)
                switch = r_dark if bright else r_bright
                total = emit + switch
                if total <= 0.0:
                    dark_count += 1
                    break
                dwell = -log(_uniform(&state)) / total
                if time + dwell >= t:
                    dark_count += 1
                    break
                time += dwell
                if _uniform(&state) * total < emit:
                    break
                bright = not bright
    return dark_count
