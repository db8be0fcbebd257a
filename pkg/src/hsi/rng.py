"""Deterministic random streams.

All randomness in the engine flows from a single integer seed. Child
streams are derived by (seed, label) so that adding a consumer never
shifts the draws of another. Philox is counter-based, so streams are
stable across platforms and numpy versions that keep the generator.
"""

from __future__ import annotations

import zlib

import numpy as np


def child_seed(seed: int, label: str) -> np.random.SeedSequence:
    """Derive a named child seed from a root seed."""
    return np.random.SeedSequence((int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(label.encode("utf-8"))))


def generator(seed: int, label: str) -> np.random.Generator:
    """Philox generator for the (seed, label) stream."""
    return np.random.Generator(np.random.Philox(child_seed(seed, label)))
