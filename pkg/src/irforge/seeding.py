"""Stable seed derivation.

Seeds are derived by hashing the parent seed together with any JSON-able
keys, so a child stream depends only on *what* it is for, never on the
order in which streams are requested.
"""

import hashlib
import json

import numpy as np

SEED_BITS = 63


def derive_seed(parent: int, *keys) -> int:
    payload = json.dumps([int(parent), *keys], sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> (64 - SEED_BITS)


def derive_rng(parent: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(parent, *keys))
