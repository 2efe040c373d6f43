"""Master-seed fan-out.

Every random stream in the package is derived from a master seed plus a
purpose string and integer keys (client id, round, epoch, candidate index),
so results do not depend on the order in which work is executed.
"""

import hashlib

import numpy as np


def derive_seed(master: int, purpose: str, *keys: int) -> int:
    """Derive a stable 63-bit sub-seed.

    Args:
        master: Master seed
        purpose: Name of the random stream (e.g. "shuffle")
        *keys: Integer coordinates of the stream (client id, epoch, ...)

    Returns:
        Non-negative integer seed
    """
    material = "|".join([str(int(master)), purpose, *(str(int(key)) for key in keys)])
    digest = hashlib.blake2b(material.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def make_rng(master: int, purpose: str, *keys: int) -> np.random.Generator:
    """Create a numpy generator for a derived stream."""
    return np.random.default_rng(derive_seed(master, purpose, *keys))
