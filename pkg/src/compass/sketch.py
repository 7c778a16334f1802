"""AGMS, Fast-AGMS and partitioned Fast-AGMS sketches.

A Fast-AGMS sketch keeps ``rows`` independent rows of ``buckets`` signed
counters.  Each inserted key lands in one bucket per row (chosen by the
row's bucket hash) and adds the row's +/-1 sign for that key.  Two sketches
built over the same edge share their random functions, so the bucket-wise
dot product of a row is an unbiased join-size estimate; the median over
rows is reported.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import SketchMismatchError
from .rng import DEFAULT_MASTER_SEED, seed_arrays

_MAGIC = b"FAGM"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIQQH")


@dataclass(frozen=True)
class SketchConfig:
    rows: int = 11
    buckets: int = 1024

    def __post_init__(self):
        if self.rows < 1 or self.rows % 2 == 0:
            raise ValueError(f"rows must be a positive odd number, got {self.rows}")
        if self.buckets < 2 or self.buckets & (self.buckets - 1):
            raise ValueError(f"buckets must be a power of two >= 2, got {self.buckets}")

    @property
    def counters(self) -> int:
        return self.rows * self.buckets

    @property
    def nbytes(self) -> int:
        return 8 * self.counters


def median_of_rows(values):
    """Median of an odd number of row estimates (exact for Python ints)."""
    ordered = sorted(values)
    return ordered[len(ordered) // 2]


def _as_keys(keys) -> np.ndarray:
    arr = np.asarray(keys)
    if arr.dtype != np.uint64:
        arr = arr.astype(np.int64).view(np.uint64) if arr.dtype.kind == "i" else arr.astype(np.uint64)
    return np.atleast_1d(arr)


def exact_row_dots(a: np.ndarray, b: np.ndarray) -> list[int]:
    """Row-wise dot products without overflow; falls back to Python ints when needed."""
    bound = np.abs(a).max(axis=1).astype(float) * np.abs(b).max(axis=1).astype(float) * a.shape[1]
    if np.all(bound < 2.0**62):
        return [int(v) for v in np.einsum("ij,ij->i", a, b)]
    return [sum(int(x) * int(y) for x, y in zip(ra, rb)) for ra, rb in zip(a, b)]


# -- Fast-AGMS ---------------------------------------------------------------


@dataclass(eq=False)
class FastAgmsSketch:
    config: SketchConfig
    edge_id: str
    hash_coeffs: np.ndarray
    xi_coeffs: np.ndarray
    counters: np.ndarray
    tuple_count: int = 0
    master_seed: int = DEFAULT_MASTER_SEED

    @classmethod
    def empty(cls, config: SketchConfig, edge_id: str, master_seed: int = DEFAULT_MASTER_SEED):
        xi, h = seed_arrays(master_seed, edge_id, np.arange(config.rows))
        counters = np.zeros((config.rows, config.buckets), dtype=np.int64)
        return cls(config, edge_id, h, xi, counters, 0, master_seed)

    @classmethod
    def build(cls, keys, config: SketchConfig, edge_id: str, master_seed: int = DEFAULT_MASTER_SEED):
        sk = cls.empty(config, edge_id, master_seed)
        sk.update(keys)
        return sk

    def update(self, keys) -> None:
        """Insert one key or an array of keys."""
        keys = _as_keys(keys)
        if len(keys):
            self.counters += kernels.fa_build(keys, self.hash_coeffs, self.xi_coeffs, self.config.buckets)
            self.tuple_count += len(keys)

    def same_family(self, other: FastAgmsSketch) -> bool:
        return (
            self.config.rows == other.config.rows
            and self.edge_id == other.edge_id
            and np.array_equal(self.hash_coeffs, other.hash_coeffs)
            and np.array_equal(self.xi_coeffs, other.xi_coeffs)
        )

    def _check_compatible(self, other: FastAgmsSketch) -> None:
        if self.config != other.config or not self.same_family(other):
            raise SketchMismatchError(
                f"incompatible sketches: {self.edge_id}/{self.config} vs {other.edge_id}/{other.config}"
            )

    def __add__(self, other: FastAgmsSketch) -> FastAgmsSketch:
        self._check_compatible(other)
        return FastAgmsSketch(
            self.config,
            self.edge_id,
            self.hash_coeffs,
            self.xi_coeffs,
            self.counters + other.counters,
            self.tuple_count + other.tuple_count,
            self.master_seed,
        )

    def fold(self) -> FastAgmsSketch:
        """Halve the bucket count; same as building with ``buckets // 2``."""
        b = self.config.buckets
        if b % 2 or b < 4:
            raise ValueError(f"cannot fold a sketch with {b} buckets")
        half = b // 2
        return FastAgmsSketch(
            SketchConfig(self.config.rows, half),
            self.edge_id,
            self.hash_coeffs,
            self.xi_coeffs,
            self.counters[:, :half] + self.counters[:, half:],
            self.tuple_count,
            self.master_seed,
        )

    def fold_to(self, buckets: int) -> FastAgmsSketch:
        sk = self
        while sk.config.buckets > buckets:
            sk = sk.fold()
        if sk.config.buckets != buckets:
            raise ValueError(f"cannot fold {self.config.buckets} buckets to {buckets}")
        return sk

    def __eq__(self, other):
        if not isinstance(other, FastAgmsSketch):
            return NotImplemented
        return (
            self.config == other.config
            and self.same_family(other)
            and self.tuple_count == other.tuple_count
            and np.array_equal(self.counters, other.counters)
        )

    # serialization

    def to_bytes(self) -> bytes:
        name = self.edge_id.encode()
        head = _HEADER.pack(
            _MAGIC, _VERSION, self.config.rows, self.config.buckets, self.tuple_count, self.master_seed, len(name)
        )
        return b"".join(
            [
                head,
                name,
                self.hash_coeffs.astype("<u8").tobytes(),
                self.xi_coeffs.astype("<u8").tobytes(),
                self.counters.astype("<i8").tobytes(),
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> FastAgmsSketch:
        if len(data) < _HEADER.size:
            raise ValueError("truncated sketch header")
        magic, version, r, b, count, seed, name_len = _HEADER.unpack_from(data, 0)
        if magic != _MAGIC:
            raise ValueError("not a Fast-AGMS sketch")
        if version != _VERSION:
            raise ValueError(f"unsupported sketch format version {version}")
        off = _HEADER.size
        if len(data) != off + name_len + 48 * r + 8 * r * b:
            raise ValueError(f"sketch payload has {len(data)} bytes, layout needs {off + name_len + 48 * r + 8 * r * b}")
        edge_id = data[off : off + name_len].decode()
        off += name_len
        h = np.frombuffer(data, dtype="<u8", count=2 * r, offset=off).reshape(r, 2).astype(np.uint64)
        off += 16 * r
        xi = np.frombuffer(data, dtype="<u8", count=4 * r, offset=off).reshape(r, 4).astype(np.uint64)
        off += 32 * r
        counters = np.frombuffer(data, dtype="<i8", count=r * b, offset=off).reshape(r, b).astype(np.int64)
        return cls(SketchConfig(r, b), edge_id, h, xi, counters, count, seed)

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "fast-agms",
                "version": _VERSION,
                "rows": self.config.rows,
                "buckets": self.config.buckets,
                "edge_id": self.edge_id,
                "master_seed": self.master_seed,
                "tuple_count": self.tuple_count,
                "hash_coeffs": self.hash_coeffs.tolist(),
                "xi_coeffs": self.xi_coeffs.tolist(),
                "counters": self.counters.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> FastAgmsSketch:
        d = json.loads(text)
        return cls(
            SketchConfig(d["rows"], d["buckets"]),
            d["edge_id"],
            np.array(d["hash_coeffs"], dtype=np.uint64),
            np.array(d["xi_coeffs"], dtype=np.uint64),
            np.array(d["counters"], dtype=np.int64),
            d["tuple_count"],
            d["master_seed"],
        )


def fa_two_way_rows(a: FastAgmsSketch, b: FastAgmsSketch) -> list[int]:
    a._check_compatible(b)
    return exact_row_dots(a.counters, b.counters)


def fa_two_way_estimate(a: FastAgmsSketch, b: FastAgmsSketch) -> int:
    """Signed median over rows of the bucket-wise dot product."""
    return median_of_rows(fa_two_way_rows(a, b))


# -- AGMS --------------------------------------------------------------------


@dataclass(eq=False)
class AgmsSketch:
    """Composed AGMS sketch: every counter is an independent basic estimator.

    A table attached to several edges adds the product of the edges' signs
    for each tuple.
    """

    config: SketchConfig
    edges: tuple[str, ...]
    xi_coeffs: np.ndarray  # (len(edges), rows * buckets, 4)
    counters: np.ndarray = field(default=None)
    master_seed: int = DEFAULT_MASTER_SEED

    @classmethod
    def empty(cls, config: SketchConfig, edges, master_seed: int = DEFAULT_MASTER_SEED):
        edges = tuple(edges)
        inst = np.arange(config.counters)
        xi = np.stack([seed_arrays(master_seed, e, inst)[0] for e in edges]) if edges else np.zeros((0, config.counters, 4), np.uint64)
        return cls(config, edges, xi, np.zeros((config.rows, config.buckets), dtype=np.int64), master_seed)

    @classmethod
    def build(cls, keys, config: SketchConfig, edges, master_seed: int = DEFAULT_MASTER_SEED):
        sk = cls.empty(config, edges, master_seed)
        sk.update_many(keys)
        return sk

    def update(self, keys) -> None:
        """Insert one tuple: one key per attached edge."""
        keys = np.asarray(keys).reshape(-1)
        if len(keys) != len(self.edges):
            raise ValueError(f"expected {len(self.edges)} keys, got {len(keys)}")
        self.update_many(keys.reshape(1, -1))

    def update_many(self, keys) -> None:
        keys = np.asarray(keys)
        if keys.ndim == 1:
            keys = keys.reshape(-1, 1)
        if keys.shape[1] != len(self.edges):
            raise ValueError(f"expected {len(self.edges)} keys per tuple, got {keys.shape[1]}")
        if len(keys) == 0:
            return
        keys = _as_keys(keys.reshape(-1)).reshape(keys.shape)
        distinct, counts = np.unique(keys, axis=0, return_counts=True)
        flat = kernels.agms_build(distinct, counts.astype(np.int64), self.xi_coeffs)
        self.counters += flat.reshape(self.config.rows, self.config.buckets)


def agms_estimate(sketches: list[AgmsSketch]) -> float:
    """Product of counters across tables, mean per row, median over rows."""
    if not sketches:
        raise ValueError("no sketches")
    config = sketches[0].config
    seen: dict[str, list[np.ndarray]] = {}
    for sk in sketches:
        if sk.config != config or sk.master_seed != sketches[0].master_seed:
            raise SketchMismatchError("AGMS sketches with different configs")
        for e, coeffs in zip(sk.edges, sk.xi_coeffs):
            seen.setdefault(e, []).append(coeffs)
    for e, fams in seen.items():
        if len(fams) != 2 or not np.array_equal(fams[0], fams[1]):
            raise SketchMismatchError(f"edge {e} must appear in exactly two sketches with equal seeds")
    prod = np.ones((config.rows, config.buckets))
    for sk in sketches:
        prod = prod * sk.counters
    return float(median_of_rows(prod.mean(axis=1)))


# -- partitioned Fast-AGMS ---------------------------------------------------


@dataclass(eq=False)
class PartitionedSketch:
    """Fast-AGMS tensor with one hashed dimension per incident edge."""

    rows: int
    dims: tuple[int, ...]
    edge_ids: tuple[str, ...]
    hash_coeffs: np.ndarray  # (rows, k, 2)
    xi_coeffs: np.ndarray  # (rows, k, 4)
    counters: np.ndarray  # (rows, *dims)
    master_seed: int = DEFAULT_MASTER_SEED

    @classmethod
    def empty(cls, rows: int, dims, edge_ids, master_seed: int = DEFAULT_MASTER_SEED):
        dims, edge_ids = tuple(int(d) for d in dims), tuple(edge_ids)
        if len(dims) != len(edge_ids) or not dims:
            raise ValueError("one bucket count per edge required")
        for d in dims:
            SketchConfig(rows, d)  # validates
        seeds = [seed_arrays(master_seed, e, np.arange(rows)) for e in edge_ids]
        xi = np.stack([s[0] for s in seeds], axis=1)
        h = np.stack([s[1] for s in seeds], axis=1)
        return cls(rows, dims, edge_ids, h, xi, np.zeros((rows, *dims), dtype=np.int64), master_seed)

    @classmethod
    def build(cls, keys, rows: int, dims, edge_ids, master_seed: int = DEFAULT_MASTER_SEED):
        sk = cls.empty(rows, dims, edge_ids, master_seed)
        sk.update(keys)
        return sk

    def update(self, keys) -> None:
        """Insert tuples given as an (n, k) array, or a single k-tuple."""
        arr = np.asarray(keys)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.shape[1] != len(self.dims):
            raise ValueError(f"expected {len(self.dims)} keys per tuple, got {arr.shape[1]}")
        if len(arr) == 0:
            return
        arr = _as_keys(arr.reshape(-1)).reshape(arr.shape)
        flat = kernels.part_build(arr, self.hash_coeffs, self.xi_coeffs, self.dims)
        self.counters += flat.reshape(self.counters.shape)


def part_estimate_rows(boundary: list[FastAgmsSketch], center: PartitionedSketch, wiring: dict[str, int]) -> list[float]:
    k = len(center.dims)
    if sorted(wiring.values()) != list(range(k)) or len(boundary) != k:
        raise SketchMismatchError("wiring must map one boundary sketch to every center dimension")
    by_dim: dict[int, FastAgmsSketch] = {}
    for sk in boundary:
        if sk.edge_id not in wiring:
            raise SketchMismatchError(f"boundary sketch {sk.edge_id} is not wired")
        d = wiring[sk.edge_id]
        if (
            center.edge_ids[d] != sk.edge_id
            or sk.config.rows != center.rows
            or sk.config.buckets != center.dims[d]
            or not np.array_equal(sk.hash_coeffs, center.hash_coeffs[:, d])
            or not np.array_equal(sk.xi_coeffs, center.xi_coeffs[:, d])
        ):
            raise SketchMismatchError(f"boundary sketch {sk.edge_id} inconsistent with dimension {d}")
        by_dim[d] = sk
    out = []
    for row in range(center.rows):
        t = center.counters[row].astype(np.float64)
        # contracting the trailing axis each time keeps the remaining axes in place
        for d in range(k - 1, -1, -1):
            t = t @ by_dim[d].counters[row].astype(np.float64)
        out.append(float(t))
    return out


def part_estimate(boundary: list[FastAgmsSketch], center: PartitionedSketch, wiring: dict[str, int]) -> float:
    return median_of_rows(part_estimate_rows(boundary, center, wiring))
