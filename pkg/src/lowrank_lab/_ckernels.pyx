# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: xoshiro256** stream and one-sided Jacobi sweeps.

Semantics match ``_pykernels`` exactly for the random stream (same integer
arithmetic, same libm calls) and to rounding for the Jacobi sweep.
"""

from libc.math cimport sqrt, log, cos, sin, fabs

COMPILED = True

cdef double INV53 = 2.0 ** -53
cdef double TWO_PI = 6.283185307179586


cdef inline unsigned long long _rotl(unsigned long long x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline unsigned long long _next(unsigned long long *s) nogil:
    cdef unsigned long long out = _rotl(s[1] * 5ULL, 7) * 9ULL
    cdef unsigned long long t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return out


def uint64_fill(unsigned long long[::1] state, unsigned long long[::1] out):
    """Fill ``out`` with the next stream values; advances ``state`` in place."""
    cdef unsigned long long s[4]
    cdef Py_ssize_t i, n = out.shape[0]
    s[0] = state[0]; s[1] = state[1]; s[2] = state[2]; s[3] = state[3]
    for i in range(n):
        out[i] = _next(s)
    state[0] = s[0]; state[1] = s[1]; state[2] = s[2]; state[3] = s[3]


def normal_fill(unsigned long long[::1] state, double[::1] out):
    """Fill ``out`` (even length) with Box-Muller pairs from consecutive uniforms."""
    cdef unsigned long long s[4]
    cdef unsigned long long x
    cdef double u1, u2, r, a
    cdef Py_ssize_t i, n = out.shape[0]
    s[0] = state[0]; s[1] = state[1]; s[2] = state[2]; s[3] = state[3]
    for i in range(0, n, 2):
        x = _next(s)
        u1 = <double>((x >> 11) + 1ULL) * INV53
        x = _next(s)
        u2 = <double>((x >> 11) + 1ULL) * INV53
        r = sqrt(-2.0 * log(u1))
        a = TWO_PI * u2
        out[i] = r * cos(a)
        out[i + 1] = r * sin(a)
    state[0] = s[0]; state[1] = s[1]; state[2] = s[2]; state[3] = s[3]


def jacobi_sweeps(double[:, ::1] b, double[:, ::1] v, double tol, int max_sweeps):
    """One-sided Jacobi rotation sweeps; see ``_pykernels.jacobi_sweeps``."""
    cdef Py_ssize_t m = b.shape[0], n = b.shape[1]
    cdef Py_ssize_t i, j, p, q
    cdef int sweep
    cdef double s1sq, thresh, off, apq, app, aqq, nj
    cdef double tau, t, c, s_, xp, xq
    off = 0.0
    for sweep in range(1, max_sweeps + 1):
        s1sq = 0.0
        for j in range(n):
            nj = 0.0
            for i in range(m):
                nj += b[i, j] * b[i, j]
            if nj > s1sq:
                s1sq = nj
        thresh = tol * s1sq
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = 0.0
                for i in range(m):
                    apq += b[i, p] * b[i, q]
                if fabs(apq) > off:
                    off = fabs(apq)
                if apq == 0.0:
                    continue
                app = 0.0
                aqq = 0.0
                for i in range(m):
                    app += b[i, p] * b[i, p]
                    aqq += b[i, q] * b[i, q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s_ = c * t
                for i in range(m):
                    xp = b[i, p]
                    xq = b[i, q]
                    b[i, p] = c * xp - s_ * xq
                    b[i, q] = s_ * xp + c * xq
                for i in range(n):
                    xp = v[i, p]
                    xq = v[i, q]
                    v[i, p] = c * xp - s_ * xq
                    v[i, q] = s_ * xp + c * xq
        if off <= thresh:
            return sweep, off, True
    return max_sweeps, off, False
