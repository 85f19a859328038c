"""Deterministic pseudo-random source used by every stochastic operation.

The generator is xoshiro256** (256-bit state, shift/rotate update) seeded
from a single 64-bit value through the splitmix64 mixer, so the same seed
gives a bit-identical stream everywhere. Gaussians come from Box-Muller on
consecutive uniform pairs: the first word of a pair produces u1, the second
u2, and the draws sqrt(-2 ln u1) cos(2 pi u2), sqrt(-2 ln u1) sin(2 pi u2)
are emitted in that order (the second is cached between calls when an odd
number is requested). Uniforms map a word x to ((x >> 11) + 1) * 2^-53,
which lies in (0, 1].
"""

import numpy as np

from lowrank_lab import _backend

_MASK64 = (1 << 64) - 1
_SM_GAMMA = 0x9E3779B97F4A7C15
_SM_MUL1 = 0xBF58476D1CE4E5B9
_SM_MUL2 = 0x94D049BB133111EB


def _splitmix64(z):
    z = (z + _SM_GAMMA) & _MASK64
    x = z
    x = ((x ^ (x >> 30)) * _SM_MUL1) & _MASK64
    x = ((x ^ (x >> 27)) * _SM_MUL2) & _MASK64
    return x ^ (x >> 31), z


class Rng:
    """Seeded xoshiro256** stream with uniform, normal, and Bernoulli draws."""

    def __init__(self, seed: int):
        if not 0 <= int(seed) <= _MASK64:
            raise ValueError("seed must fit in 64 bits")
        self.seed = int(seed)
        state = np.empty(4, dtype=np.uint64)
        z = int(seed)
        for i in range(4):
            word, z = _splitmix64(z)
            state[i] = word
        if not state.any():
            state[0] = 1  # all-zero state is invalid for xoshiro
        self._state = state
        self._spare = None  # cached second Box-Muller draw

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words."""
        out = np.empty(n, dtype=np.uint64)
        _backend.uint64_fill(self._state, out)
        return out

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` uniforms in (0, 1]."""
        words = self.raw(n)
        return ((words >> np.uint64(11)) + np.uint64(1)) * 2.0 ** -53

    def normals(self, shape) -> np.ndarray:
        """Standard normal array of the given shape, filled in row-major order."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        out = np.empty(n, dtype=np.float64)
        k = 0
        if self._spare is not None and n > 0:
            out[0] = self._spare
            self._spare = None
            k = 1
        remaining = n - k
        if remaining > 0:
            pairs = (remaining + 1) // 2
            buf = np.empty(2 * pairs, dtype=np.float64)
            _backend.normal_fill(self._state, buf)
            out[k:] = buf[:remaining]
            if 2 * pairs > remaining:
                self._spare = float(buf[-1])
        return out.reshape(shape)

    def normal(self) -> float:
        return float(self.normals(1)[0])

    def bernoulli(self, p: float, shape) -> np.ndarray:
        """0/1 array with P(1) = p; entry is 1 when the uniform draw is < p."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = self.uniforms(n)
        return (u < p).astype(np.float64).reshape(shape)

    def spawn(self, index: int) -> "Rng":
        """Independent child stream ``index``.

        Children depend only on the parent's seed, not on how far its stream
        has advanced: child seed = splitmix64 mix of
        (parent seed) xor (golden gamma * (index + 1)).
        """
        mix, _ = _splitmix64((self.seed ^ ((_SM_GAMMA * (index + 1)) & _MASK64)) & _MASK64)
        return Rng(mix)
