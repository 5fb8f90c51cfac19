"""Deterministic seed derivation.

Every randomized operation in the package is a pure function of its inputs
and an unsigned integer seed.  When one seeded process spawns many seeded
sub-processes (noise copies per example, ensemble members, shuffles per
epoch), the child seeds are derived here so that streams never collide and
results never depend on execution order.
"""

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def mix_seed(seed: int, *indices: int) -> int:
    """Derive a child seed from a master seed and one or more indices.

    Split-mix style avalanche: nearby (seed, index) pairs map to unrelated
    outputs, so per-example or per-member streams are effectively independent.
    """
    state = seed & _MASK64
    for i in indices:
        state = _splitmix64(state ^ _splitmix64(i & _MASK64))
    return state
