"""Deterministic seed derivation: one master seed fans out into named sub-streams."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, stream: str) -> int:
    """Stable 63-bit sub-seed for a named stream, independent of platform hashing."""
    digest = hashlib.sha256(f"{master_seed}:{stream}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def substream(master_seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, stream))
