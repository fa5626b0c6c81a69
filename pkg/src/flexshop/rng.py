"""Deterministic pseudo-random numbers shared by samplers and sweeps.

A small splitmix64 generator is used instead of :mod:`random` so that the
compiled accelerator kernels can reproduce the exact same stream with C
integer arithmetic.  Every stochastic component of the package derives its
seeds through :func:`derive_seed`, which keeps independent components on
independent streams while remaining reproducible from one master seed.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def mix64(value: int) -> int:
    """Finalize a 64-bit value with the splitmix64 mixing function."""
    z = value & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Derive the seed of substream ``index`` from a master seed."""
    return mix64(mix64(seed) ^ ((index + 1) * _GAMMA))


class Rng:
    """splitmix64 stream: 64-bit outputs, doubles in [0, 1), and raw bits."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return mix64(self.state)

    def next_double(self) -> float:
        # 53 high bits, the usual uniform-double construction.
        return (self.next_u64() >> 11) * 2.0**-53

    def next_bit(self) -> int:
        return self.next_u64() >> 63

    def next_below(self, bound: int) -> int:
        """Uniform-ish integer in [0, bound); bound must be positive."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound
