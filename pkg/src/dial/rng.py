"""Deterministic seed fan-out.

Every stochastic component derives its own stream from
(master seed, component name, index) so that runs are reproducible and
concurrent episode generation cannot entangle streams. The derivation is
a keyed blake2b hash, stable across platforms and Python versions.
"""

from __future__ import annotations

import hashlib

import numpy as np

_SEED_BYTES = 8


def derive_seed(master: int, name: str, index: int = 0) -> int:
    """Child seed = hash(master, component name, index), as a 64-bit int."""
    payload = f"{int(master)}:{name}:{int(index)}".encode()
    digest = hashlib.blake2b(payload, digest_size=_SEED_BYTES).digest()
    return int.from_bytes(digest, "little")


def rng_for(master: int, name: str, index: int = 0) -> np.random.Generator:
    """Generator seeded by the derived child seed."""
    return np.random.default_rng(derive_seed(master, name, index))
