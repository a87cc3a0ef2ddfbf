"""
SplitMix64, the one generator every stochastic choice in the repo goes through.

    state_k = seed + k * GAMMA            (mod 2**64, k = 1, 2, ...)
    out_k   = mix64(state_k)

mix64 is the standard SplitMix64 finaliser. Seeds are plain 64-bit integers
so traces and page contents can be reproduced by any implementation.
"""
import math

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_NP_GAMMA = np.uint64(GAMMA)
_NP_M1 = np.uint64(_M1)
_NP_M2 = np.uint64(_M2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def uniform_open(self) -> float:
        """Uniform double in (0, 1]: 53 random bits, shifted off zero."""
        return ((self.next_u64() >> 11) + 1) * (1.0 / (1 << 53))

    def exponential(self, rate: float) -> float:
        """Inverse-CDF exponential draw with mean 1/rate."""
        return -math.log(self.uniform_open()) / rate

    def below(self, n: int) -> int:
        """Integer in [0, n); modulo bias is irrelevant at the sizes used here."""
        return self.next_u64() % n


def words(seed: int, count: int) -> np.ndarray:
    """First `count` outputs of SplitMix64(seed) as a uint64 array."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed & MASK64) + np.arange(1, count + 1, dtype=np.uint64) * _NP_GAMMA
        z = (z ^ (z >> _S30)) * _NP_M1
        z = (z ^ (z >> _S27)) * _NP_M2
        return z ^ (z >> _S31)
