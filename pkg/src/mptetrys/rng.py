"""Deterministic 64-bit pseudo-random primitives.

Every stochastic component (loss chains, repair coefficients, seed
derivation) draws from splitmix64 streams so that a run is a pure function
of its seed.  The compiled engine re-implements the same arithmetic
instruction for instruction; parity tests rely on both sides producing
identical sequences.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


def finalize(z):
    """splitmix64 output finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def mix64(x):
    """One-shot 64-bit mix of an arbitrary integer."""
    return finalize((x + GOLDEN) & MASK64)


def derive_seed(root, *tags):
    """Derive an independent child seed from a root seed and integer tags."""
    s = root & MASK64
    for t in tags:
        s = finalize(s ^ mix64(t & MASK64))
    return s


class SplitMix64:
    """Counter-based generator: state advances by a fixed increment."""

    def __init__(self, seed):
        self.state = seed & MASK64

    def next_u64(self):
        self.state = (self.state + GOLDEN) & MASK64
        return finalize(self.state)

    def next_double(self):
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _INV_2_53
