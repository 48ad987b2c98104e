"""Counter-based random streams keyed by (base seed, replication, purpose).

Each stream is a Philox generator whose key is derived from a
``SeedSequence`` with the replication index and a purpose code as the
spawn key, so a stream never depends on how many other streams were
created or in what order they are consumed.
"""
from __future__ import annotations

import zlib

import numpy as np


def purpose_code(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(base_seed: int, replication: int = 0, purpose: str = "main") -> np.random.Generator:
    """Return the generator for stream id ``(replication, purpose)``."""
    if base_seed < 0 or replication < 0:
        raise ValueError("seed and replication index must be non-negative")
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(replication), purpose_code(purpose)))
    return np.random.Generator(np.random.Philox(ss))


def open_uniforms(gen: np.random.Generator, size) -> np.ndarray:
    """Uniform variates on (0, 1]."""
    return 1.0 - gen.random(size)
