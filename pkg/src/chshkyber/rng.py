"""Seeded, splittable randomness and domain-separated hashing.

Every random draw in the package comes from a numpy ``Generator`` whose seed
is derived with SHAKE-256 from a root seed plus a tuple of labels, so
sub-streams (matrix expansion, secrets, noise, coins, shards) never overlap
and any run can be replayed from its root seed.
"""

from __future__ import annotations

import hashlib
from typing import Union

import numpy as np

SeedLike = Union[bytes, int, str]

SEED_BYTES = 32

# Domain tags for the single extendable-output hash.
DOMAIN_SEED = b"seed"
DOMAIN_EXPAND = b"A-expand"
DOMAIN_COINS = b"coins"
DOMAIN_KDF = b"kdf"
DOMAIN_REJECT = b"reject"
DOMAIN_TRANSCRIPT = b"transcript"
DOMAIN_PRF_H = b"prf-H"
DOMAIN_PRF_PSI = b"prf-psi"


def _encode_part(part) -> bytes:
    if isinstance(part, bytes):
        raw = part
    elif isinstance(part, str):
        raw = part.encode()
    elif isinstance(part, (int, np.integer)):
        raw = int(part).to_bytes(16, "little", signed=True)
    else:
        raise TypeError(f"cannot encode seed component of type {type(part).__name__}")
    return len(raw).to_bytes(4, "little") + raw


def xof(domain: bytes, *parts, length: int = 32) -> bytes:
    """SHAKE-256 over a domain tag and length-prefixed parts."""
    h = hashlib.shake_256()
    h.update(_encode_part(domain))
    for part in parts:
        h.update(_encode_part(part))
    return h.digest(length)


def seed_bytes(seed: SeedLike) -> bytes:
    """Normalize an int/str/bytes seed to 32 bytes."""
    if isinstance(seed, bytes) and len(seed) == SEED_BYTES:
        return seed
    return xof(DOMAIN_SEED, seed)


def derive_seed(seed: SeedLike, *labels) -> bytes:
    return xof(DOMAIN_SEED, seed_bytes(seed), *labels)


def make_rng(seed: SeedLike, *labels) -> np.random.Generator:
    """A generator for the sub-stream ``labels`` under ``seed``."""
    material = derive_seed(seed, *labels) if labels else seed_bytes(seed)
    return np.random.Generator(np.random.PCG64(int.from_bytes(material, "little")))


def rng_from_bytes(material: bytes) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int.from_bytes(material, "little")))
