"""Keyed deterministic random streams.

Every randomized operation in the package draws from a generator keyed by
(root seed, entity key, purpose tag) rather than from one shared sequential
stream, so adding a device or an architecture never perturbs draws for the
existing ones.
"""

import hashlib

import numpy as np


def derive_seed(root: int, *parts) -> int:
    """Stable 64-bit sub-seed from a root seed and a key path."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(root)).encode())
    for part in parts:
        h.update(b"|")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "big")


def keyed_rng(root: int, *parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *parts))


def lognormal_factors(rng: np.random.Generator, cv: float, size) -> np.ndarray:
    """Multiplicative noise factors with mean exactly-ish 1 and the given
    coefficient of variation. cv == 0 returns exact ones (no draw)."""
    if cv < 0:
        raise ValueError(f"coefficient of variation must be >= 0, got {cv}")
    if cv == 0:
        return np.ones(size)
    sigma2 = np.log1p(cv * cv)
    return np.exp(rng.normal(-sigma2 / 2.0, np.sqrt(sigma2), size))
