"""Push-down selection fused with Fast-AGMS sketch construction.

One pass over a table evaluates its predicate, counts the qualifying rows
exactly and inserts each qualifying row's join key into one sketch per
incident join edge.  Small results are also materialised.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .catalog import Table
from .errors import CatalogError, QuerySpecError
from .rng import DEFAULT_MASTER_SEED
from .sketch import FastAgmsSketch, SketchConfig

DEFAULT_THRESHOLD = 100_000


# -- predicates ----------------------------------------------------------------


@dataclass(frozen=True)
class Eq:
    column: str
    value: object


@dataclass(frozen=True)
class Range:
    column: str
    low: object = None
    high: object = None
    low_inclusive: bool = True
    high_inclusive: bool = True


@dataclass(frozen=True)
class InSet:
    column: str
    values: tuple


@dataclass(frozen=True)
class Like:
    column: str
    pattern: str


@dataclass(frozen=True)
class And:
    args: tuple


@dataclass(frozen=True)
class Or:
    args: tuple


@dataclass(frozen=True)
class Not:
    arg: object


_COMPARISONS = {
    "lt": lambda c, v: Range(c, high=v, high_inclusive=False),
    "le": lambda c, v: Range(c, high=v),
    "gt": lambda c, v: Range(c, low=v, low_inclusive=False),
    "ge": lambda c, v: Range(c, low=v),
    "eq": Eq,
    "ne": lambda c, v: Not(Eq(c, v)),
}


def parse_predicate(spec):
    """Build a predicate tree from its JSON form (see README for the grammar)."""
    if spec is None:
        return None
    if not isinstance(spec, dict) or "op" not in spec:
        raise QuerySpecError(f"predicate must be an object with an 'op' key: {spec!r}")
    op = spec["op"].lower()
    try:
        if op in ("and", "or"):
            args = tuple(parse_predicate(a) for a in spec["args"])
            if not args:
                raise QuerySpecError(f"'{op}' needs at least one argument")
            return And(args) if op == "and" else Or(args)
        if op == "not":
            return Not(parse_predicate(spec["arg"]))
        if op in _COMPARISONS:
            return _COMPARISONS[op](spec["col"], spec["value"])
        if op == "range":
            return Range(
                spec["col"],
                spec.get("low"),
                spec.get("high"),
                spec.get("low_inclusive", True),
                spec.get("high_inclusive", True),
            )
        if op == "in":
            return InSet(spec["col"], tuple(spec["values"]))
        if op == "like":
            return Like(spec["col"], spec["pattern"])
        if op == "not_like":
            return Not(Like(spec["col"], spec["pattern"]))
    except KeyError as exc:
        raise QuerySpecError(f"predicate {spec!r} is missing {exc}") from None
    raise QuerySpecError(f"unknown predicate op {op!r}")


def predicate_to_json(pred):
    if pred is None:
        return None
    if isinstance(pred, Eq):
        return {"op": "eq", "col": pred.column, "value": pred.value}
    if isinstance(pred, Range):
        return {
            "op": "range",
            "col": pred.column,
            "low": pred.low,
            "high": pred.high,
            "low_inclusive": pred.low_inclusive,
            "high_inclusive": pred.high_inclusive,
        }
    if isinstance(pred, InSet):
        return {"op": "in", "col": pred.column, "values": list(pred.values)}
    if isinstance(pred, Like):
        return {"op": "like", "col": pred.column, "pattern": pred.pattern}
    if isinstance(pred, (And, Or)):
        return {"op": "and" if isinstance(pred, And) else "or", "args": [predicate_to_json(a) for a in pred.args]}
    if isinstance(pred, Not):
        return {"op": "not", "arg": predicate_to_json(pred.arg)}
    raise QuerySpecError(f"not a predicate: {pred!r}")


def like_match(pattern: str, text: str) -> bool:
    """SQL LIKE restricted to the ``%`` wildcard."""
    parts = pattern.split("%")
    if len(parts) == 1:
        return text == pattern
    first, *middle, last = parts
    if not text.startswith(first):
        return False
    pos = len(first)
    for seg in middle:
        if not seg:
            continue
        i = text.find(seg, pos)
        if i < 0:
            return False
        pos = i + len(seg)
    return len(text) - len(last) >= pos and text.endswith(last)


def _check_constant(table: Table, column: str, value) -> None:
    col = table.schema[column]
    if col.type == "int64":
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise QuerySpecError(f"{table.name}.{column} is int64; got constant {value!r}")
    elif not isinstance(value, str):
        raise QuerySpecError(f"{table.name}.{column} is text; got constant {value!r}")


def _leaf(table: Table, pred) -> tuple[np.ndarray, np.ndarray]:
    if pred.column not in table.schema:
        raise CatalogError(f"table {table.name}: unknown column {pred.column!r}")
    values = table.columns[pred.column]
    unknown = table.nulls[pred.column]
    text = table.schema[pred.column].type == "text"
    if isinstance(pred, Eq):
        _check_constant(table, pred.column, pred.value)
        hit = np.fromiter((v == pred.value for v in values), bool, len(values)) if text else values == pred.value
    elif isinstance(pred, Range):
        hit = np.ones(len(values), dtype=bool)
        for bound, incl, lower in ((pred.low, pred.low_inclusive, True), (pred.high, pred.high_inclusive, False)):
            if bound is None:
                continue
            _check_constant(table, pred.column, bound)
            if text:
                if lower:
                    cmp = (lambda v: v >= bound) if incl else (lambda v: v > bound)
                else:
                    cmp = (lambda v: v <= bound) if incl else (lambda v: v < bound)
                hit &= np.fromiter((cmp(v) for v in values), bool, len(values))
            elif lower:
                hit &= values >= bound if incl else values > bound
            else:
                hit &= values <= bound if incl else values < bound
    elif isinstance(pred, InSet):
        for v in pred.values:
            _check_constant(table, pred.column, v)
        if text:
            wanted = set(pred.values)
            hit = np.fromiter((v in wanted for v in values), bool, len(values))
        else:
            hit = np.isin(values, np.array(pred.values, dtype=np.int64))
    elif isinstance(pred, Like):
        if not text:
            raise QuerySpecError(f"LIKE on non-text column {table.name}.{pred.column}")
        hit = np.fromiter((like_match(pred.pattern, v) for v in values), bool, len(values))
    else:
        raise QuerySpecError(f"not a predicate: {pred!r}")
    return hit & ~unknown, unknown.copy()


def _eval3(table: Table, pred) -> tuple[np.ndarray, np.ndarray]:
    """Three-valued evaluation: (definitely true, unknown) masks."""
    if isinstance(pred, Not):
        t, u = _eval3(table, pred.arg)
        return ~t & ~u, u
    if isinstance(pred, (And, Or)):
        parts = [_eval3(table, a) for a in pred.args]
        trues = np.array([t for t, _ in parts])
        falses = np.array([~t & ~u for t, u in parts])
        if isinstance(pred, And):
            t, f = trues.all(axis=0), falses.any(axis=0)
        else:
            t, f = trues.any(axis=0), falses.all(axis=0)
        return t, ~t & ~f
    return _leaf(table, pred)


def evaluate(pred, table: Table) -> np.ndarray:
    """Boolean mask of rows satisfying ``pred`` (nulls never satisfy a comparison)."""
    if pred is None:
        return np.ones(table.row_count, dtype=bool)
    return _eval3(table, pred)[0]


# -- join keys -------------------------------------------------------------------


def canonical_keys(table: Table, column: str) -> np.ndarray:
    """64-bit join keys: int64 reinterpreted, text hashed with blake2b."""
    values = table.column(column)
    if table.schema[column].type == "int64":
        return values.astype(np.int64).view(np.uint64)
    return np.fromiter(
        (int.from_bytes(hashlib.blake2b(v.encode(), digest_size=8).digest(), "little") for v in values),
        dtype=np.uint64,
        count=len(values),
    )


# -- scan ------------------------------------------------------------------------


@dataclass
class ScanResult:
    exact_count: int
    sketches: dict[str, FastAgmsSketch]
    materialized: Table | None = None
    # canonical keys of the qualifying rows, per edge; ``None`` marks a null join value
    join_keys: dict[str, np.ndarray] = field(default_factory=dict)
    join_valid: dict[str, np.ndarray] = field(default_factory=dict)


def _scan_part(table, pred, join_attrs, config, master_seed):
    mask = evaluate(pred, table)
    sketches, keys, valid = {}, {}, {}
    for edge_id, col in join_attrs.items():
        k = canonical_keys(table, col)[mask]
        ok = ~table.null_mask(col)[mask]
        sk = FastAgmsSketch.empty(config, edge_id, master_seed)
        sk.update(k[ok])
        sketches[edge_id], keys[edge_id], valid[edge_id] = sk, k, ok
    return mask, sketches, keys, valid


def scan(
    table: Table,
    predicate=None,
    join_attrs: dict[str, str] | None = None,
    config: SketchConfig = SketchConfig(),
    master_seed: int = DEFAULT_MASTER_SEED,
    threshold: int = DEFAULT_THRESHOLD,
    workers: int = 1,
) -> ScanResult:
    join_attrs = dict(join_attrs or {})
    for col in join_attrs.values():
        table.column(col)
    n = table.row_count
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    parts = [table.take(slice(lo, hi)) for lo, hi in zip(bounds[:-1], bounds[1:])]
    if workers == 1:
        results = [_scan_part(parts[0], predicate, join_attrs, config, master_seed)]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda p: _scan_part(p, predicate, join_attrs, config, master_seed), parts))
    mask = np.concatenate([r[0] for r in results])
    sketches = {}
    for edge_id in join_attrs:
        acc = results[0][1][edge_id]
        for r in results[1:]:
            acc = acc + r[1][edge_id]
        sketches[edge_id] = acc
    keys = {e: np.concatenate([r[2][e] for r in results]) for e in join_attrs}
    valid = {e: np.concatenate([r[3][e] for r in results]) for e in join_attrs}
    count = int(mask.sum())
    materialized = table.take(mask) if count <= threshold else None
    return ScanResult(count, sketches, materialized, keys, valid)
