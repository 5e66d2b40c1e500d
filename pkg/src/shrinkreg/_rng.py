"""Counter-based random substreams.

Every replication of every experiment draws from its own Philox stream whose
key is a fixed function of ``(seed, stream, index)``. Nothing depends on the
order in which streams are created, so serial and parallel runs agree bit
for bit.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

# stream tags
REPLICATION = 0
DESIGN = 1
AUXILIARY = 2


def splitmix64(value: int) -> int:
    z = (value + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def substream_key(seed: int, stream: int, index: int) -> np.ndarray:
    if not 0 <= seed <= _MASK:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    if index < 0:
        raise ValueError(f"substream index must be non-negative, got {index}")
    hi = splitmix64(splitmix64(seed) ^ (stream & _MASK))
    return np.array([hi, index & _MASK], dtype=np.uint64)


def substream(seed: int, stream: int, index: int) -> np.random.Generator:
    """Return the generator for substream ``index`` of ``stream`` under ``seed``."""
    return np.random.Generator(np.random.Philox(key=substream_key(seed, stream, index)))
