"""Deterministic seed derivation.

A single run seed fans out into independent per-stage streams by hashing
``"<seed>:<label>"`` with blake2b and taking the first 8 bytes little-endian.
Every seeded operation in the package goes through this helper, so one run
seed reproduces an entire pipeline bit for bit.
"""

import hashlib


def derive_seed(seed: int, label: str) -> int:
    """Map a base seed and a stage label to a stable 64-bit stream seed."""
    digest = hashlib.blake2b(f"{seed}:{label}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
