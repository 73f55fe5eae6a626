# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the built-in psi functions.

Same contract as ``_pykernels``; codes 0 = mean, 1 = huber, 2 = gaussian scale.
"""
import numpy as np

from libc.math cimport fabs


cdef inline double _psi(int code, double b, double x, double theta) noexcept nogil:
    cdef double u
    if code == 0:
        return x - theta
    elif code == 1:
        u = x - theta
        if u > b:
            return b
        if u < -b:
            return -b
        return u
    u = x / theta
    return u * u - 1.0


cdef inline double _sum(int code, double b, const double[::1] x, double theta) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(x.shape[0]):
        s += _psi(code, b, x[i], theta)
    return s


cdef inline double _sign(double v) noexcept nogil:
    return (v > 0) - (v < 0)


def estimating_sums(int code, double param, const double[::1] data, const double[::1] thetas):
    cdef Py_ssize_t j, m = thetas.shape[0]
    out = np.empty(m)
    cdef double[::1] o = out
    with nogil:
        for j in range(m):
            o[j] = _sum(code, param, data, thetas[j])
    return out


def batch_roots(int code, double param, const double[:, ::1] rows, const double[::1] lo,
                const double[::1] hi, double xtol=1e-12, int maxiter=200):
    cdef Py_ssize_t k, nrows = rows.shape[0]
    cdef double a, b, m, fa, fb, fm, sec
    cdef double eps = 2.220446049250313e-16
    cdef int it
    out = np.empty(nrows)
    cdef double[::1] o = out
    with nogil:
        for k in range(nrows):
            a = lo[k]
            b = hi[k]
            fa = _sum(code, param, rows[k], a)
            fb = _sum(code, param, rows[k], b)
            for it in range(maxiter):
                m = 0.5 * (a + b)
                if (b - a) <= xtol + 4.0 * eps * fabs(m):
                    break
                fm = _sum(code, param, rows[k], m)
                if _sign(fm) == _sign(fa):
                    a = m
                    fa = fm
                else:
                    b = m
                    fb = fm
            if fa == 0.0:
                o[k] = a
            elif fb == 0.0:
                o[k] = b
            else:
                if fb != fa:
                    sec = a - fa * (b - a) / (fb - fa)
                else:
                    sec = 0.5 * (a + b)
                if sec < a or sec > b:
                    sec = 0.5 * (a + b)
                o[k] = sec
    return out
