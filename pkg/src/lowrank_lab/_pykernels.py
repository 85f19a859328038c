"""Pure Python/NumPy fallback for the compiled kernels in ``_ckernels``.

Two hot loops live behind this interface: the xoshiro256** random stream
(with Box-Muller Gaussian pairs) and the one-sided Jacobi rotation sweeps.
The random-stream routines reproduce the compiled kernels bit for bit: the
integer arithmetic is exact by construction and the transcendentals go
through the same libm. The Jacobi sweep agrees with the compiled one to
rounding (NumPy dots use pairwise summation, the C loop sums sequentially).
"""

import math

import numpy as np

COMPILED = False

_MASK64 = (1 << 64) - 1
_INV53 = 2.0 ** -53
_TWO_PI = 6.283185307179586


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK64


def _next(s):
    # xoshiro256**: returns (value, new state tuple)
    s0, s1, s2, s3 = s
    out = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
    t = (s1 << 17) & _MASK64
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    return out, (s0, s1, s2, s3)


def uint64_fill(state, out):
    """Fill ``out`` (uint64) with the next values of the stream in ``state``.

    ``state`` is a length-4 uint64 array, advanced in place.
    """
    s = tuple(int(x) for x in state)
    for i in range(out.shape[0]):
        x, s = _next(s)
        out[i] = x
    state[:] = s


def normal_fill(state, out):
    """Fill ``out`` (even length, float64) with standard normal draws.

    Box-Muller on consecutive uniform pairs: u = ((x >> 11) + 1) * 2^-53
    maps each 64-bit word into (0, 1]; the pair (u1, u2) yields
    z0 = sqrt(-2 ln u1) cos(2 pi u2) and z1 = sqrt(-2 ln u1) sin(2 pi u2),
    emitted in that order.
    """
    s = tuple(int(x) for x in state)
    n = out.shape[0]
    for i in range(0, n, 2):
        x, s = _next(s)
        u1 = ((x >> 11) + 1) * _INV53
        x, s = _next(s)
        u2 = ((x >> 11) + 1) * _INV53
        r = math.sqrt(-2.0 * math.log(u1))
        a = _TWO_PI * u2
        out[i] = r * math.cos(a)
        out[i + 1] = r * math.sin(a)
    state[:] = s


def jacobi_sweeps(b, v, tol, max_sweeps):
    """Orthogonalize the columns of ``b`` by cyclic one-sided Jacobi rotations.

    ``b`` is m x n with m >= n, modified in place; the accumulated right
    rotations are applied to ``v`` (n x n) in place. A sweep visits every
    column pair (p, q), p < q, in lexicographic order and rotates whenever
    the pair's Gram off-diagonal entry is nonzero. Sweeps stop once the
    largest pre-rotation off-diagonal entry of a full sweep is at most
    ``tol`` times the largest squared column norm.

    Returns (sweeps_used, last_off_max, converged).
    """
    m, n = b.shape
    off = 0.0
    for sweep in range(1, max_sweeps + 1):
        s1sq = 0.0
        for j in range(n):
            cj = b[:, j]
            nj = float(cj @ cj)
            if nj > s1sq:
                s1sq = nj
        thresh = tol * s1sq
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                bp = b[:, p]
                bq = b[:, q]
                apq = float(bp @ bq)
                if abs(apq) > off:
                    off = abs(apq)
                if apq == 0.0:
                    continue
                app = float(bp @ bp)
                aqq = float(bq @ bq)
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s_ = c * t
                new_p = c * bp - s_ * bq
                new_q = s_ * bp + c * bq
                b[:, p] = new_p
                b[:, q] = new_q
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s_ * vq
                v[:, q] = s_ * vp + c * vq
        if off <= thresh:
            return sweep, off, True
    return max_sweeps, off, False
