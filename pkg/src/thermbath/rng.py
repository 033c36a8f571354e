"""Splitmix64 random numbers.

Every random draw in the package goes through :class:`SplitMix64` so that
ensembles are bit-reproducible across platforms and numpy versions.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def mix64(z: int) -> int:
    """Splitmix64 finalizer on a single 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_seed(master: int, *indices: int) -> int:
    """Child seed for a work item, e.g. ``derive_seed(seed, delta_idx, real_idx)``.

    The indices are packed and hashed, XORed into the master seed, and the
    result is passed through the finalizer once more.
    """
    h = 0
    for i in indices:
        h = mix64(h ^ ((int(i) & 0xFFFFFFFF) + GOLDEN_GAMMA))
    return mix64((int(master) & MASK64) ^ h)


class SplitMix64:
    """Vectorized splitmix64 stream.

    Output ``k`` of the stream is ``mix64(seed + k * GOLDEN_GAMMA)``, so a block
    of ``n`` outputs is computed in one numpy pass.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self, n: int) -> np.ndarray:
        n = int(n)
        if n < 0:
            raise ValueError("n must be non-negative")
        steps = np.arange(1, n + 1, dtype=np.uint64)
        states = np.uint64(self.state) + steps * np.uint64(GOLDEN_GAMMA)
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        return _mix_array(states)

    def random(self, size=None) -> np.ndarray | float:
        """Uniform doubles in [0, 1) with 53 random bits."""
        n = 1 if size is None else int(np.prod(size))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return float(u[0]) if size is None else u.reshape(size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        u = self.random(size)
        return low + (high - low) * u

    def normal(self, size=None):
        """Standard normals by Box-Muller."""
        n = 1 if size is None else int(np.prod(size))
        m = (n + 1) // 2
        u1 = 1.0 - self.random(m)  # (0, 1]
        u2 = self.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        z = z[:n]
        return float(z[0]) if size is None else z.reshape(size)

    def complex_normal(self, size) -> np.ndarray:
        """Circular complex Gaussians with E|z|^2 = 1."""
        z = self.normal((2,) + tuple(np.atleast_1d(size)))
        return (z[0] + 1j * z[1]) / np.sqrt(2.0)

    def exponential(self, rate=1.0, size=None):
        u = self.random(size)
        return -np.log1p(-u) / rate

    def integers(self, high: int, size=None):
        """Integers in [0, high)."""
        u = self.random(size)
        out = np.minimum(np.floor(u * high), high - 1).astype(np.int64)
        return int(out) if size is None else out

    def choice(self, probs, size=None):
        """Categorical draws with the given probabilities."""
        cdf = np.cumsum(np.asarray(probs, dtype=float))
        cdf /= cdf[-1]
        u = self.random(size)
        idx = np.searchsorted(cdf, u, side="right")
        return np.minimum(idx, len(cdf) - 1)

    def dirichlet_uniform(self, k: int) -> np.ndarray:
        """Uniform point on the (k-1)-simplex (normalized exponentials)."""
        x = self.exponential(1.0, k)
        return x / x.sum()
