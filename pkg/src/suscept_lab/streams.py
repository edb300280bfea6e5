"""Named, reproducible random sub-streams derived from a single root seed.

All randomness in an experiment flows from one integer seed. Independent
chains (one per temperature, per SGLD chain, per dataset draw, ...) each get
a named child stream, so results do not depend on execution order or thread
count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(seed: int, *names: str) -> int:
    """Derive a 64-bit child seed from ``seed`` and a path of stream names."""
    h = hashlib.sha256()
    h.update(int(seed).to_bytes(16, "little", signed=True))
    for name in names:
        h.update(b"\x1f")
        h.update(str(name).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def substream(seed: int, *names: str) -> np.random.Generator:
    """Generator for the named sub-stream of ``seed``."""
    return np.random.Generator(np.random.PCG64(child_seed(seed, *names)))
