"""Seeded random families shared by both endpoints of a join edge.

Every sketch row owns a 4-wise independent sign family (``xi``) and a
2-universal bucket hash (``h``).  Their coefficients are a pure function of
``(master_seed, edge_id, row, role)`` so the two tables of an edge derive
identical functions without any shared state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import _field
from ._field import PRIME

DEFAULT_MASTER_SEED = 42
_MASK64 = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# role tags: xi coefficients 1..4, hash coefficients 5..6
_XI_TAGS = np.arange(1, 5, dtype=np.uint64)
_H_TAGS = np.arange(5, 7, dtype=np.uint64)


@dataclass(frozen=True)
class XiSeed:
    coefficients: tuple[int, int, int, int]


@dataclass(frozen=True)
class HashSeed:
    coefficients: tuple[int, int]


def _splitmix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def edge_hash(edge_id: str) -> int:
    return int.from_bytes(hashlib.blake2b(edge_id.encode(), digest_size=8).digest(), "little")


def canonical_edge_id(left: str, right: str) -> str:
    """Order-independent name for the edge joining two qualified attributes."""
    return "|".join(sorted((left, right)))


def seed_arrays(master_seed: int, edge_id: str, rows) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised derivation: ``(xi[n, 4], h[n, 2])`` uint64 coefficients for each row index."""
    rows = np.atleast_1d(np.asarray(rows, dtype=np.uint64))
    base = _splitmix(np.array([master_seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    base = _splitmix(base ^ np.uint64(edge_hash(edge_id)))
    with np.errstate(over="ignore"):
        per_row = _splitmix(base + (rows + np.uint64(1)) * _GOLDEN)
        xi = _splitmix(per_row[:, None] ^ (_XI_TAGS * _MIX1)[None, :]) % np.uint64(PRIME)
        h = _splitmix(per_row[:, None] ^ (_H_TAGS * _MIX1)[None, :]) % np.uint64(PRIME)
    # degenerate hash (constant) would put everything in one bucket
    h[:, 1] = np.where(h[:, 1] == 0, np.uint64(1), h[:, 1])
    return xi, h


def derive_seeds(master_seed: int, edge_id: str, row: int) -> tuple[XiSeed, HashSeed]:
    xi, h = seed_arrays(master_seed, edge_id, [row])
    return XiSeed(tuple(int(c) for c in xi[0])), HashSeed(tuple(int(c) for c in h[0]))


def xi(seed: XiSeed, key: int) -> int:
    """Sign in {+1, -1} for ``key``."""
    return int(_field.xi_signs(seed.coefficients, np.array([key & _MASK64], dtype=np.uint64))[0])


def bucket(seed: HashSeed, key: int, b: int) -> int:
    if b < 1:
        raise ValueError("bucket count must be >= 1")
    return int(_field.bucket_index(seed.coefficients, np.array([key & _MASK64], dtype=np.uint64), b)[0])
