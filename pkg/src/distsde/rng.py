"""Counter-based random streams for order-independent parallel simulation.

Paths are grouped in fixed blocks of ``BLOCK`` paths and time in fixed chunks
of ``CHUNK`` steps.  The Philox key is ``(seed, block)`` and the counter's top
two words hold ``(stream kind, chunk)``, so every ``(block, chunk)`` draw is a
pure function of its indices regardless of scheduling.
"""
from __future__ import annotations

import numpy as np

__all__ = ["BLOCK", "CHUNK", "NORMAL", "UNIFORM", "philox", "normals", "uniforms", "block_slices"]

BLOCK = 1024
CHUNK = 1024
NORMAL = 0
UNIFORM = 1

_MASK64 = (1 << 64) - 1


def philox(seed: int, block: int, chunk: int, kind: int) -> np.random.Generator:
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    key = int(seed) | (int(block) << 64)
    counter = np.array([0, 0, kind, chunk], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def normals(seed: int, block: int, chunk: int, paths: int, steps: int, d: int) -> np.ndarray:
    """Standard normals of shape ``(paths, steps, d)`` for one block and chunk."""
    return philox(seed, block, chunk, NORMAL).standard_normal((paths, steps, d))


def uniforms(seed: int, block: int, chunk: int, paths: int, steps: int) -> np.ndarray:
    """Uniforms on ``[0, 1)`` of shape ``(paths, steps)``, independent of :func:`normals`."""
    return philox(seed, block, chunk, UNIFORM).random((paths, steps))


def block_slices(M: int) -> list:
    """Path-index slices of the fixed blocks covering ``M`` paths."""
    return [slice(s, min(s + BLOCK, M)) for s in range(0, M, BLOCK)]
