"""Synthetic skewed data and query workloads for tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .catalog import Column, Schema, Table
from .planner import Edge, QuerySpec, TableRef
from .scan import Range


def zipf_keys(n: int, s: float, domain: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws from {1..domain} with P(k) proportional to ``k ** -s``."""
    p = 1.0 / np.arange(1, domain + 1, dtype=float) ** s
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64) + 1


def random_tree_edges(n: int, rng: np.random.Generator, extra: int = 0) -> list[tuple[int, int]]:
    """Random spanning tree on ``n`` vertices plus ``extra`` non-parallel chords."""
    edges = [(int(rng.integers(0, v)), v) for v in range(1, n)]
    have = {tuple(sorted(e)) for e in edges}
    candidates = [(a, b) for a in range(n) for b in range(a + 1, n) if (a, b) not in have]
    rng.shuffle(candidates)
    edges += [tuple(c) for c in candidates[:extra]]
    return edges


def synthetic_workload(
    n_tables: int,
    rows,
    seed: int = 0,
    extra_edges: int = 0,
    skew: float = 1.1,
    domain: int = 1000,
    selectivity: float | None = 0.5,
    edges: list[tuple[int, int]] | None = None,
) -> tuple[dict[str, Table], QuerySpec]:
    """Tables ``t0..t{n-1}`` joined along a random connected graph.

    Each edge gets its own zipf-distributed join column on both sides.  Every
    table also carries a uniform ``year`` column; with ``selectivity`` set,
    roughly that fraction of tables gets a range predicate on it.
    """
    rng = np.random.default_rng(seed)
    if edges is None:
        edges = random_tree_edges(n_tables, rng, extra_edges)
    names = [f"t{i}" for i in range(n_tables)]
    sizes = [rows] * n_tables if np.isscalar(rows) else list(rows)
    cols: dict[str, dict[str, np.ndarray]] = {
        nm: {"id": np.arange(sz, dtype=np.int64), "year": rng.integers(1950, 2021, size=sz)}
        for nm, sz in zip(names, sizes)
    }
    joins = []
    for k, (a, b) in enumerate(edges):
        col = f"j{k}"
        for v in (a, b):
            cols[names[v]][col] = zipf_keys(sizes[v], skew, domain, rng)
        joins.append(Edge(f"e{k}", names[a], col, names[b], col))
    tables = {
        nm: Table.from_arrays(nm, c, Schema(tuple(Column(k, "int64") for k in c)))
        for nm, c in cols.items()
    }
    refs = []
    for nm in names:
        pred = None
        if selectivity is not None and rng.random() < selectivity:
            lo = int(rng.integers(1950, 2010))
            pred = Range("year", low=lo)
        refs.append(TableRef(nm, nm, pred))
    return tables, QuerySpec(refs, joins)


def job6a_like(scale: int = 1, seed: int = 0) -> tuple[dict[str, Table], QuerySpec]:
    """Five tables shaped like JOB query 6a: k, mk, t, ci, n with a t-mk-ci triangle."""
    rng = np.random.default_rng(seed)
    nk, nt, nn = 200 * scale, 1000 * scale, 2000 * scale
    nmk, nci = 5000 * scale, 8000 * scale
    words = np.array(["superhero", "sequel", "marvel-cinematic-universe", "based-on-comic", "murder"], dtype=object)
    keyword = words[rng.integers(0, len(words), size=nk)]
    keyword[:3] = "marvel-cinematic-universe"
    first = np.array(["Robert", "Chris", "Scarlett", "Mark", "Jeremy"], dtype=object)
    last = np.array(["Downey Jr.", "Evans", "Johansson", "Ruffalo", "Renner", "Downey"], dtype=object)
    names = np.array(
        [f"{last[i]}, {first[j]}" for i, j in zip(rng.integers(0, len(last), nn), rng.integers(0, len(first), nn))],
        dtype=object,
    )
    tables = {
        "keyword": Table.from_arrays(
            "keyword",
            {"id": np.arange(1, nk + 1), "keyword": keyword},
            Schema((Column("id"), Column("keyword", "text"))),
        ),
        "title": Table.from_arrays(
            "title",
            {"id": np.arange(1, nt + 1), "production_year": rng.integers(1950, 2021, size=nt)},
            Schema((Column("id"), Column("production_year"))),
        ),
        "name": Table.from_arrays(
            "name", {"id": np.arange(1, nn + 1), "name": names}, Schema((Column("id"), Column("name", "text")))
        ),
        "movie_keyword": Table.from_arrays(
            "movie_keyword",
            {"movie_id": zipf_keys(nmk, 0.9, nt, rng), "keyword_id": zipf_keys(nmk, 1.0, nk, rng)},
            Schema((Column("movie_id"), Column("keyword_id"))),
        ),
        "cast_info": Table.from_arrays(
            "cast_info",
            {"movie_id": zipf_keys(nci, 0.9, nt, rng), "person_id": zipf_keys(nci, 0.8, nn, rng)},
            Schema((Column("movie_id"), Column("person_id"))),
        ),
    }
    spec = QuerySpec.from_json(
        {
            "tables": [
                {"name": "keyword", "alias": "k", "predicate": {"op": "eq", "col": "keyword", "value": "marvel-cinematic-universe"}},
                {"name": "movie_keyword", "alias": "mk"},
                {"name": "title", "alias": "t", "predicate": {"op": "gt", "col": "production_year", "value": 2010}},
                {"name": "cast_info", "alias": "ci"},
                {"name": "name", "alias": "n", "predicate": {"op": "like", "col": "name", "pattern": "%Downey%Robert%"}},
            ],
            "joins": [
                {"id": "e1", "left": "k.id", "right": "mk.keyword_id"},
                {"id": "e2", "left": "mk.movie_id", "right": "t.id"},
                {"id": "e3", "left": "t.id", "right": "ci.movie_id"},
                {"id": "e4", "left": "ci.movie_id", "right": "mk.movie_id"},
                {"id": "e5", "left": "ci.person_id", "right": "n.id"},
            ],
        }
    )
    return tables, spec


__all__ = ["zipf_keys", "random_tree_edges", "synthetic_workload", "job6a_like"]
