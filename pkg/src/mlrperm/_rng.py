"""Counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(seed, *path)`` and whose counter encodes the draw index.  A
draw's stream therefore depends only on where it sits in the hierarchy, never
on which thread produced it or in what order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = (1 << 64) - 1


def stream_key(seed: int, *path: int) -> np.ndarray:
    """128-bit Philox key for the stream at ``path`` below ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return ss.generate_state(2, np.uint64)


def draw_rng(key: np.ndarray, index: int, attempt: int = 0) -> np.random.Generator:
    """Generator for draw ``index`` (retry ``attempt``) under ``key``.

    Counter words 0-1 are left free for the generator to consume, so distinct
    ``(index, attempt)`` pairs never overlap.
    """
    counter = np.array([0, 0, index, attempt], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def path_rng(seed: int, *path: int) -> np.random.Generator:
    """Sequential generator for the stream at ``path`` (dataset generation etc.)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, label: str) -> int:
    """Stable unsigned 64-bit seed derived from a master seed and a label."""
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & _U64
