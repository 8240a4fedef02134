"""Seeded random stream used for probe pools and random test fields.

All randomness in the package flows through SplitMix64 so that runs are
reproducible bit-for-bit and the streams can be replayed from any
implementation of the same 64-bit algorithm: the state advances by the
golden-ratio increment 0x9E3779B97F4A7C15 and each output is finalized
with the murmur-style mix (xor-shift 30 / 27 / 31 with the two standard
multipliers).  Doubles take the top 53 bits of the mixed word.
"""

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Deterministic 64-bit stream with uniform/normal/integers helpers."""

    def __init__(self, seed):
        self.state = int(seed) & MASK

    def next_u64(self):
        self.state = (self.state + GAMMA) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * MIX1) & MASK
        z = ((z ^ (z >> 27)) * MIX2) & MASK
        return z ^ (z >> 31)

    def uniform(self):
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, k):
        return [self.uniform() for _ in range(k)]

    def randint(self, lo, hi):
        """Uniform integer in [lo, hi] via rejection-free modulo (span << 2^64)."""
        span = hi - lo + 1
        return lo + self.next_u64() % span

    def split(self):
        """Independent child stream; advances this stream by one draw."""
        return SplitMix64(self.next_u64())
