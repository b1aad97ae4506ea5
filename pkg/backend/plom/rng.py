"""Counter-based random streams keyed by labels

Every random draw in the package comes from a Philox generator whose key is
the SHA-256 digest of (master seed, label, index...). Two calls with the same
labels always replay the same stream, whatever the thread that makes them.
"""

import hashlib

import numpy as np


def derive_key(seed: int, *labels: str | int) -> int:
    """128-bit Philox key for a labeled stream"""
    text = "|".join([str(int(seed)), *(str(label) for label in labels)])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def derive_seed(seed: int, *labels: str | int) -> int:
    """63-bit child seed, used when a sub-component takes a plain integer seed"""
    return derive_key(seed, *labels) & ((1 << 63) - 1)


def stream(seed: int, *labels: str | int) -> np.random.Generator:
    """Independent generator for (seed, labels)"""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *labels)))


def block_ranges(total: int, block_size: int) -> list[tuple[int, int, int]]:
    """Fixed partition of range(total) into (block index, start, stop)"""
    return [(index, start, min(start + block_size, total)) for index, start in enumerate(range(0, total, block_size))]
