# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled theta kernels; same signatures and results as ``_theta_py``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor, log, exp, round, INFINITY, NAN, M_PI

cdef extern from "complex.h" nogil:
    double complex cexp(double complex)
    double complex clog(double complex)
    double cabs(double complex)

cnp.import_array()


cdef void _sums(double complex log_q, double complex w, double tol, int max_terms,
                double complex *s0out, double complex *s1out, double *scaleout) noexcept nogil:
    cdef double complex qinv = cexp(-log_q)
    cdef double complex winv = 1.0 / w
    cdef double complex s0 = 1.0, s1 = 0.0, tp = 1.0, tm = 1.0
    cdef double complex fp = qinv, fm = 1.0
    cdef double scale = 1.0, run_max = 1.0, a, b
    cdef int quiet = 0, l
    for l in range(1, max_terms + 1):
        tp = tp * w * fp
        fp = fp * qinv
        tm = tm * fm * winv
        fm = fm * qinv
        s0 = s0 + tp + tm
        s1 = s1 + l * (tp - tm)
        a = cabs(tp)
        b = cabs(tm)
        scale += a + b
        if a > run_max:
            run_max = a
        if b > run_max:
            run_max = b
        if a < tol * run_max and b < tol * run_max:
            quiet += 1
            if quiet >= 3:
                break
        else:
            quiet = 0
    s0out[0] = s0
    s1out[0] = s1
    scaleout[0] = scale


cdef bint _use_dual(double complex log_q) noexcept nogil:
    cdef double complex a = 0.5 * log_q
    return M_PI * M_PI * (1.0 / a).real > a.real


cdef void _dual(double complex log_q, double complex w, double tol, int max_terms,
                double complex *lg, double complex *ratio, double *rel) noexcept nogil:
    cdef double complex a = 0.5 * log_q
    cdef double complex b = clog(w) - a
    cdef double complex c = 0.25 / a
    cdef double complex bc = b * c
    cdef long mc = <long>round(bc.imag / (2 * M_PI * c.real))
    cdef double complex d = b - 2j * M_PI * mc
    cdef double complex emax = d * d * c
    cdef double complex s0 = 1.0, s1 = 2 * d * c, t
    cdef double scale = 1.0, run_max = 1.0, big, at
    cdef int quiet = 0, j, side
    cdef long m
    for j in range(1, max_terms + 1):
        big = 0.0
        for side in range(2):
            m = mc + j if side == 0 else mc - j
            d = b - 2j * M_PI * m
            t = cexp(d * d * c - emax)
            s0 = s0 + t
            s1 = s1 + t * 2 * d * c
            at = cabs(t)
            scale += at
            if at > big:
                big = at
        if big > run_max:
            run_max = big
        if big < tol * run_max:
            quiet += 1
            if quiet >= 3:
                break
        else:
            quiet = 0
    if s0 == 0:
        lg[0] = -INFINITY
        ratio[0] = NAN
        rel[0] = 0.0
        return
    lg[0] = 0.5 * clog(M_PI / a) + emax + clog(s0)
    ratio[0] = s1 / s0
    rel[0] = cabs(s0) / scale


cdef void _log(double complex log_q, double complex w, double tol, int max_terms,
               double complex *lg, double complex *lq, double *rel) noexcept nogil:
    cdef double lqr = log_q.real
    cdef long k = <long>floor(log(cabs(w)) / lqr)
    cdef double complex w0 = w * cexp(-k * log_q)
    cdef double a = cabs(w0)
    cdef double complex s0, s1
    cdef double scale
    if a < 1.0:
        k -= 1
        w0 = w0 * cexp(log_q)
    elif a >= exp(lqr):
        k += 1
        w0 = w0 * cexp(-log_q)
    if _use_dual(log_q):
        _dual(log_q, w0, tol, max_terms, &s0, &s1, &scale)
        rel[0] = scale
        if scale == 0:
            lg[0] = s0
            lq[0] = s1
            return
        lg[0] = 0.5 * k * (k - 1) * log_q + k * clog(w0) + s0
        lq[0] = k + s1
        return
    _sums(log_q, w0, tol, max_terms, &s0, &s1, &scale)
    rel[0] = cabs(s0) / scale
    if s0 == 0:
        lg[0] = -INFINITY
        lq[0] = NAN
        rel[0] = 0.0
        return
    lg[0] = 0.5 * k * (k - 1) * log_q + k * clog(w0) + clog(s0)
    lq[0] = k + s1 / s0


def theta_reduced(double complex log_q, double complex w, double tol=1e-16, int max_terms=64):
    cdef double complex s0, s1
    cdef double scale
    _sums(log_q, w, tol, max_terms, &s0, &s1, &scale)
    return complex(s0), complex(s1), scale


def use_dual(double complex log_q):
    return bool(_use_dual(log_q))


def theta_dual_reduced(double complex log_q, double complex w, double tol=1e-16, int max_terms=64):
    cdef double complex lg, ratio
    cdef double rel
    _dual(log_q, w, tol, max_terms, &lg, &ratio, &rel)
    return complex(lg), complex(ratio), rel


def reduce_arg(double complex log_q, double complex w):
    cdef long k = <long>floor(log(cabs(w)) / log_q.real)
    cdef double complex w0 = w * cexp(-k * log_q)
    cdef double a = cabs(w0)
    if a < 1.0:
        k -= 1
        w0 = w0 * cexp(log_q)
    elif a >= exp(log_q.real):
        k += 1
        w0 = w0 * cexp(-log_q)
    return int(k), complex(w0)


def theta_log(double complex log_q, double complex w, double tol=1e-16, int max_terms=64):
    cdef double complex lg, lq
    cdef double rel
    _log(log_q, w, tol, max_terms, &lg, &lq, &rel)
    return complex(lg), complex(lq), rel


def theta_log_many(double complex log_q, ws, double tol=1e-16, int max_terms=64):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] flat = np.ascontiguousarray(ws, dtype=complex).ravel()
    cdef Py_ssize_t n = flat.shape[0], i
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(n, dtype=complex)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rel = np.empty(n, dtype=float)
    cdef double complex lg, lq
    cdef double r
    with nogil:
        for i in range(n):
            _log(log_q, flat[i], tol, max_terms, &lg, &lq, &r)
            out[i] = lg
            rel[i] = r
    shape = np.shape(ws)
    return out.reshape(shape), rel.reshape(shape)
