"""Single-registry seed derivation.

One master seed reproduces a whole run: every subsystem (environment,
population sampling, bootstrap resampling, ...) draws its seed from
``derive_seed(master, *labels)``, which is a stable hash of the master seed
and a label path.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *labels: object) -> int:
    """Derive a 63-bit child seed from a master seed and a label path."""
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "big") & 0x7FFF_FFFF_FFFF_FFFF


def generator(master: int, *labels: object) -> np.random.Generator:
    """A PCG64 generator seeded from the derived child seed."""
    return np.random.default_rng(derive_seed(master, *labels))
