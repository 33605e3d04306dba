# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: counter-based sampling, measurement oracles, Jacobi SVD.

Must stay numerically interchangeable with ``sharpstep._kernels.pure``:
the sampler is bit-identical by construction (same integer mixing, same
libm transform), the remaining kernels agree up to summation order.
"""

from libc.math cimport M_PI, cos, fabs, log, sin, sqrt
from libc.stdint cimport uint64_t

import numpy as np

BACKEND = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15
cdef uint64_t MIX_A = 0xBF58476D1CE4E5B9
cdef uint64_t MIX_B = 0x94D049BB133111EB
cdef double TWO_PI = 2.0 * M_PI
cdef double INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


cdef inline uint64_t _mix64(uint64_t z) nogil:
    # SplitMix64 output function (Steele/Lea/Flood finalizer).
    z = (z ^ (z >> 30)) * MIX_A
    z = (z ^ (z >> 27)) * MIX_B
    return z ^ (z >> 31)


cdef inline uint64_t _stream_key(uint64_t seed, uint64_t stream) nogil:
    return _mix64(_mix64(seed) ^ _mix64(stream))


cdef inline double _u_half_open(uint64_t z) nogil:
    # 53-bit uniform in [0, 1)
    return <double> (z >> 11) * INV_2_53


cdef inline double _u_half_closed(uint64_t z) nogil:
    # 53-bit uniform in (0, 1]; safe as a log argument
    return (<double> (z >> 11) + 1.0) * INV_2_53


def uniform_fill(uint64_t seed, uint64_t stream, double[::1] out):
    """Fill ``out`` with uniforms in [0, 1); position i uses counter i."""
    cdef Py_ssize_t i, n = out.shape[0]
    cdef uint64_t key = _stream_key(seed, stream)
    with nogil:
        for i in range(n):
            out[i] = _u_half_open(_mix64(key + (<uint64_t> (i + 1)) * GOLDEN))


def gaussian_fill(uint64_t seed, uint64_t stream, double[::1] out):
    """Fill ``out`` with standard normals via Box-Muller over the counter stream.

    Pair p consumes counters 2p and 2p+1, producing the cos/sin deviates in
    that order; a trailing odd element discards the sin half.
    """
    cdef Py_ssize_t p, n = out.shape[0], pairs = (n + 1) // 2
    cdef uint64_t key = _stream_key(seed, stream)
    cdef double u1, u2, r, a
    with nogil:
        for p in range(pairs):
            u1 = _u_half_closed(_mix64(key + (<uint64_t> (2 * p + 1)) * GOLDEN))
            u2 = _u_half_open(_mix64(key + (<uint64_t> (2 * p + 2)) * GOLDEN))
            r = sqrt(-2.0 * log(u1))
            a = TWO_PI * u2
            out[2 * p] = r * cos(a)
            if 2 * p + 1 < n:
                out[2 * p + 1] = r * sin(a)


def pr_value(double[:, ::1] A, double[::1] b, double[::1] x):
    """Mean absolute residual of squared linear measurements:
    (1/m) sum_i |<a_i, x>^2 - b_i|."""
    cdef Py_ssize_t i, j, m = A.shape[0], d = A.shape[1]
    cdef double acc = 0.0, t
    with nogil:
        for i in range(m):
            t = 0.0
            for j in range(d):
                t += A[i, j] * x[j]
            acc += fabs(t * t - b[i])
    return acc / m


def pr_subgrad(double[:, ::1] A, double[::1] b, double[::1] x, double[::1] out):
    """Subgradient selection (1/m) sum_i sign(<a_i,x>^2 - b_i) * 2<a_i,x> * a_i,
    with sign(0) = 0."""
    cdef Py_ssize_t i, j, m = A.shape[0], d = A.shape[1]
    cdef double t, resid, coef
    with nogil:
        for j in range(d):
            out[j] = 0.0
        for i in range(m):
            t = 0.0
            for j in range(d):
                t += A[i, j] * x[j]
            resid = t * t - b[i]
            if resid > 0.0:
                coef = 2.0 * t
            elif resid < 0.0:
                coef = -2.0 * t
            else:
                continue
            for j in range(d):
                out[j] += coef * A[i, j]
        for j in range(d):
            out[j] /= m
    return None


def cov_value(double[:, ::1] A, double[::1] b, double[:, ::1] X,
              double[::1] scratch):
    """Mean absolute residual over measurement pairs (2p, 2p+1):
    (2/m) sum_p | (||X^T a_{2p+1}||^2 - ||X^T a_{2p}||^2) - (b_{2p+1} - b_{2p}) |.

    Never forms a d-by-d matrix; ``scratch`` must have length >= r.
    """
    cdef Py_ssize_t p, i0, i1, j, k
    cdef Py_ssize_t m = A.shape[0], d = A.shape[1], r = X.shape[1]
    cdef Py_ssize_t pairs = m // 2
    cdef double acc = 0.0, s0, s1, t
    with nogil:
        for p in range(pairs):
            i0 = 2 * p
            i1 = 2 * p + 1
            s0 = 0.0
            for j in range(r):
                t = 0.0
                for k in range(d):
                    t += A[i0, k] * X[k, j]
                s0 += t * t
            s1 = 0.0
            for j in range(r):
                t = 0.0
                for k in range(d):
                    t += A[i1, k] * X[k, j]
                s1 += t * t
            acc += fabs((s1 - s0) - (b[i1] - b[i0]))
    return 2.0 * acc / m


def cov_subgrad(double[:, ::1] A, double[::1] b, double[:, ::1] X,
                double[:, ::1] out, double[::1] t0, double[::1] t1):
    """Subgradient selection (2/m) sum_p sign(resid_p) * 2 *
    (a_{2p+1}(a_{2p+1}^T X) - a_{2p}(a_{2p}^T X)), with sign(0) = 0.

    ``t0``/``t1`` are length-r scratch buffers.
    """
    cdef Py_ssize_t p, i0, i1, j, k
    cdef Py_ssize_t m = A.shape[0], d = A.shape[1], r = X.shape[1]
    cdef Py_ssize_t pairs = m // 2
    cdef double s0, s1, resid, sgn, scale
    with nogil:
        for k in range(d):
            for j in range(r):
                out[k, j] = 0.0
        for p in range(pairs):
            i0 = 2 * p
            i1 = 2 * p + 1
            s0 = 0.0
            for j in range(r):
                t0[j] = 0.0
                for k in range(d):
                    t0[j] += A[i0, k] * X[k, j]
                s0 += t0[j] * t0[j]
            s1 = 0.0
            for j in range(r):
                t1[j] = 0.0
                for k in range(d):
                    t1[j] += A[i1, k] * X[k, j]
                s1 += t1[j] * t1[j]
            resid = (s1 - s0) - (b[i1] - b[i0])
            if resid > 0.0:
                sgn = 1.0
            elif resid < 0.0:
                sgn = -1.0
            else:
                continue
            for k in range(d):
                for j in range(r):
                    out[k, j] += sgn * (A[i1, k] * t1[j] - A[i0, k] * t0[j])
        scale = 4.0 / m
        for k in range(d):
            for j in range(r):
                out[k, j] *= scale
    return None


def jacobi_singular_values(double[:, ::1] work, double tol, int max_sweeps,
                           double[::1] out):
    """One-sided Jacobi on the columns of ``work`` (destroyed in place).

    Rotates column pairs until every off-diagonal Gram entry satisfies
    |c| <= tol * sqrt(a*b); ``out`` receives the unsorted column norms.
    Returns the number of sweeps performed.
    """
    cdef Py_ssize_t i, p, q, n = work.shape[0]
    cdef int sweep = 0
    cdef bint changed = True
    cdef double a, b2, c, zeta, t, cs, sn, wp, wq
    with nogil:
        while changed and sweep < max_sweeps:
            changed = False
            sweep += 1
            for p in range(n - 1):
                for q in range(p + 1, n):
                    a = 0.0
                    b2 = 0.0
                    c = 0.0
                    for i in range(n):
                        a += work[i, p] * work[i, p]
                        b2 += work[i, q] * work[i, q]
                        c += work[i, p] * work[i, q]
                    if c * c <= tol * tol * a * b2 or a == 0.0 or b2 == 0.0:
                        continue
                    changed = True
                    zeta = (b2 - a) / (2.0 * c)
                    if zeta >= 0.0:
                        t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                    else:
                        t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                    cs = 1.0 / sqrt(1.0 + t * t)
                    sn = cs * t
                    for i in range(n):
                        wp = work[i, p]
                        wq = work[i, q]
                        work[i, p] = cs * wp - sn * wq
                        work[i, q] = sn * wp + cs * wq
        for p in range(n):
            a = 0.0
            for i in range(n):
                a += work[i, p] * work[i, p]
            out[p] = sqrt(a)
    return sweep
