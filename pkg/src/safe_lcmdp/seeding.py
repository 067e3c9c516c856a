"""Seeded random-number streams.

Every run owns a single 64-bit master seed.  Independent components draw
from named sub-streams so that, e.g., environment generation and trajectory
noise stay reproducible in isolation.  A sub-stream is derived by hashing
the stream name with SHA-256 and feeding ``[master, name_hash]`` to
``numpy.random.SeedSequence``; both steps are platform-stable.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_digest(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "big")


def substream(master_seed: int, name: str) -> np.random.Generator:
    """Return the named, deterministic generator derived from ``master_seed``."""
    seq = np.random.SeedSequence([int(master_seed), _name_digest(name)])
    return np.random.Generator(np.random.PCG64(seq))


def dirichlet(alpha: np.ndarray, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Dirichlet draws via the Gamma-ratio method: g_i ~ Gamma(alpha_i), x = g / sum(g).

    Implemented on top of the generator's Gamma sampler so the stream of draws
    is pinned by this function rather than by library internals.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if size is None:
        g = rng.gamma(alpha)
        return g / g.sum()
    g = rng.gamma(np.broadcast_to(alpha, (size, alpha.shape[0])))
    return g / g.sum(axis=1, keepdims=True)
