"""Deterministic random-stream derivation.

One experiment seed governs every random decision (data generation,
partitioning, parameter init, noise, client sampling). Components ask for
named substreams so that independent parts of the pipeline never share or
race on generator state.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _encode(part: int | str) -> int:
    if isinstance(part, (int, np.integer)):
        part = int(part)
        if part < 0:
            raise ValueError(f"substream path components must be non-negative, got {part}")
        return part
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"substream path components must be int or str, got {type(part).__name__}")


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """Return an independent generator for the given seed and label path.

    Equal (seed, path) pairs always yield identical streams; distinct paths
    yield statistically independent ones.
    """
    entropy = [_encode(seed)] + [_encode(p) for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *path: int | str) -> int:
    """Collapse a substream to a single integer seed for APIs that take one."""
    return int(substream(seed, *path).integers(0, 2**63))
