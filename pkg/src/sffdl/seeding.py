"""Counter-based seed derivation.

Every random stream is keyed by ``(master_seed, job kind, index)``, so the
stream a realization or trajectory sees does not depend on how work is split
between workers or batches.
"""
from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def kind_code(kind: str) -> int:
    return zlib.crc32(kind.encode("utf-8"))


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, kind: str, index: int) -> int:
    """64-bit seed for job ``index`` of type ``kind``."""
    h = splitmix64(int(master_seed) & MASK64)
    h = splitmix64(h ^ kind_code(kind))
    return splitmix64(h ^ (int(index) & MASK64))


def stream(master_seed: int, kind: str, index: int) -> np.random.Generator:
    """Independent numpy generator for one job."""
    seq = np.random.SeedSequence([int(master_seed) & MASK64, kind_code(kind), int(index)])
    return np.random.default_rng(seq)
