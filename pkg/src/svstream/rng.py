"""Deterministic 64-bit PRNG used wherever reproducible sampling is needed.

The generator is splitmix64: the state advances by the increment
0x9E3779B97F4A7C15 on every draw and the output mix is

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

All arithmetic is modulo 2**64.  Given the same seed the stream is identical
on every platform, which keeps RANSAC sampling, label colorization, and
texture synthesis bit-reproducible.
"""

MASK64 = (1 << 64) - 1

_INCREMENT = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """The splitmix64 output mix of a 64-bit value."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return (z ^ (z >> 31)) & MASK64


class SplitMix64:
    """Sequential splitmix64 stream."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _INCREMENT) & MASK64
        return mix64(self.state)

    def next_below(self, n: int) -> int:
        """Uniform-ish integer in [0, n); modulo bias is irrelevant at the n used here."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def next_float(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def derive_seed(seed: int, *salt: int) -> int:
    """Fold extra integers into a seed for independent per-item streams."""
    s = seed & MASK64
    for v in salt:
        s = mix64((s + _INCREMENT + (v & MASK64)) & MASK64)
    return s
