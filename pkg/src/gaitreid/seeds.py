"""Named-stream seed derivation.

All randomness in the engine flows from one root seed. Independent
components draw from child streams addressed by name, so changing the
batch order in one place never shifts random draws elsewhere.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, *stream: str) -> int:
    """Derive a child seed for the named stream, deterministically."""
    h = hashlib.blake2s(digest_size=8)
    h.update(str(int(root)).encode("ascii"))
    for name in stream:
        h.update(b"/")
        h.update(name.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def rng_for(root: int, *stream: str) -> np.random.Generator:
    """Generator seeded from the named child stream of ``root``."""
    return np.random.default_rng(derive_seed(root, *stream))
