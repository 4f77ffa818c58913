"""Deterministic pseudo-randomness for every stochastic component.

All randomness in the package flows through a single named generator,
SplitMix64, so that any result is a pure function of an explicit integer
seed.  The generator is counter-based: output i is ``mix64(seed + i*GOLDEN)``,
which lets the hot paths draw whole blocks with vectorized uint64 numpy
arithmetic while scalar consumers (Fisher-Yates loops, per-node feature
sampling) walk the identical stream with masked Python ints.  The compiled
tree core inlines the same constants in C; equality of the two paths is
covered by tests.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_PRIME = 0x100000001B3

_U64 = np.uint64
_TWO53 = float(1 << 53)


def mix64(z):
    """SplitMix64 output function on a (masked) python int."""
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix64_vec(z):
    """Vectorized mix64 on a uint64 ndarray (wraparound is intentional)."""
    z = (z ^ (z >> _U64(30))) * _U64(_MIX1)
    z = (z ^ (z >> _U64(27))) * _U64(_MIX2)
    return z ^ (z >> _U64(31))


def bounded(x, bound):
    """Map a u64 draw onto [0, bound) via the high 64 bits of x*bound.

    Exact integer arithmetic (bound < 2**32), identical on the python,
    numpy, and C paths: hi = (xh*b + ((xl*b) >> 32)) >> 32.
    """
    xh, xl = x >> 32, x & 0xFFFFFFFF
    return (xh * bound + ((xl * bound) >> 32)) >> 32


def derive(seed, *tags):
    """Derive a child seed from (seed, tags) — stable across runs/platforms.

    Tags may be ints or strings; each is folded in FNV-1a style and then
    scrambled, so streams for e.g. ("tree", 7) and ("tree", 8) are unrelated.
    """
    h = mix64((seed ^ GOLDEN) & MASK64)
    for tag in tags:
        if isinstance(tag, str):
            data = tag.encode("utf-8")
        else:
            data = (int(tag) & MASK64).to_bytes(8, "little")
        for b in data:
            h = ((h ^ b) * _FNV_PRIME) & MASK64
        h = mix64(h)
    return h


class SplitMix64:
    """Counter-based SplitMix64 stream.

    Parameters
    ----------
    seed : int
        Any integer; only the low 64 bits matter.
    """

    def __init__(self, seed):
        self.seed = seed & MASK64
        self._state = self.seed

    def spawn(self, *tags):
        """Independent child generator keyed by (original seed, tags)."""
        return SplitMix64(derive(self.seed, *tags))

    # -- raw draws ---------------------------------------------------------

    def next_u64(self):
        self._state = (self._state + GOLDEN) & MASK64
        return mix64(self._state)

    def u64(self, n):
        """Block of n u64 draws as a uint64 array (vectorized)."""
        steps = np.arange(1, n + 1, dtype=np.uint64)
        states = _U64(self._state) + steps * _U64(GOLDEN)
        self._state = (self._state + n * GOLDEN) & MASK64
        return _mix64_vec(states)

    # -- distributions -----------------------------------------------------

    def uniform(self, n=None):
        """U[0,1) doubles (53-bit mantissa)."""
        if n is None:
            return (self.next_u64() >> 11) / _TWO53
        return np.asarray(self.u64(n) >> _U64(11), dtype=np.float64) / _TWO53

    def normal(self, n=None):
        """Standard normals via Box-Muller; consumes 2*ceil(n/2) draws."""
        m = 1 if n is None else n
        pairs = (m + 1) // 2
        x = self.u64(2 * pairs)
        # u1 in (0,1] so the log is finite; u2 in [0,1).
        u1 = np.asarray((x[:pairs] >> _U64(11)) + _U64(1), dtype=np.float64) / _TWO53
        u2 = np.asarray(x[pairs:] >> _U64(11), dtype=np.float64) / _TWO53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:m]
        return z[0] if n is None else z

    def below(self, bound):
        """One integer uniform on [0, bound), bound < 2**32."""
        return bounded(self.next_u64(), bound)

    def integers(self, bound, n):
        """n integer uniforms on [0, bound) as an int64 array."""
        x = self.u64(n)
        b = _U64(bound)
        hi = (x >> _U64(32)) * b + (((x & _U64(0xFFFFFFFF)) * b) >> _U64(32))
        return np.asarray(hi >> _U64(32), dtype=np.int64)

    # -- combinatorics -----------------------------------------------------

    def shuffle(self, arr):
        """In-place Fisher-Yates shuffle of a 1-D array or list."""
        for i in range(len(arr) - 1, 0, -1):
            j = self.below(i + 1)
            arr[i], arr[j] = arr[j], arr[i]
        return arr

    def permutation(self, n):
        return np.asarray(self.shuffle(np.arange(n)))

    def choice_without_replacement(self, n, k):
        """k distinct indices from range(n), in draw order (partial F-Y)."""
        arr = np.arange(n)
        for i in range(k):
            j = i + self.below(n - i)
            arr[i], arr[j] = arr[j], arr[i]
        return arr[:k]
