"""Named random streams derived from one root seed."""
from __future__ import annotations

import zlib

import numpy as np


def rng(seed: int, domain: str) -> np.random.Generator:
    """Independent generator for ``domain`` ("sampling", "init", "dropout", "ga", ...)."""
    return np.random.default_rng((int(seed), zlib.crc32(domain.encode())))


def child_seed(seed: int, domain: str) -> int:
    return int(rng(seed, domain).integers(2 ** 31))
