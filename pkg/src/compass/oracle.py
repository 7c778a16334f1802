"""Ground truth: exact join sizes, exhaustive plan costs and accuracy metrics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .errors import GuardExceeded

DEFAULT_MAX_ROWS = 20_000_000
MAX_EXHAUSTIVE_VERTICES = 8


def _edge_tuples(edges):
    out = []
    for e in edges:
        if isinstance(e, tuple):
            out.append(e)
        else:
            out.append((e.edge_id, *e.endpoints))
    return out


def exact_cardinality(tables, edges, valid=None, max_rows: int = DEFAULT_MAX_ROWS) -> int:
    """Exact size of a multi-way equi-join.

    ``tables`` maps alias -> {edge_id: key array}; all arrays of one alias
    are row-aligned.  ``valid`` optionally marks null join values with
    ``False``.  ``edges`` are ``(edge_id, alias_a, alias_b)`` tuples or
    planner edges.  The join runs as a pipeline of hash joins over grouped
    counts; ``max_rows`` bounds every intermediate.
    """
    edges = _edge_tuples(edges)
    aliases = sorted(tables)
    if not edges:
        if len(aliases) != 1:
            raise ValueError("several tables without join edges")
        arrays = tables[aliases[0]]
        return int(len(next(iter(arrays.values())))) if arrays else 0
    inc: dict[str, list[str]] = {a: [] for a in aliases}
    adj: dict[str, set[str]] = {a: set() for a in aliases}
    for eid, a, b in edges:
        inc[a].append(eid)
        inc[b].append(eid)
        adj[a].add(b)
        adj[b].add(a)

    frames = {}
    for a in aliases:
        cols = inc[a]
        df = pd.DataFrame({e: np.asarray(tables[a][e], dtype=np.uint64) for e in cols})
        if valid is not None and a in valid:
            ok = np.ones(len(df), dtype=bool)
            for e in cols:
                if e in valid[a]:
                    ok &= np.asarray(valid[a][e], dtype=bool)
            df = df[ok]
        if df.empty:
            return 0
        frames[a] = df.groupby(cols, sort=True).size().rename("cnt").reset_index()

    order, seen = [aliases[0]], {aliases[0]}
    for v in order:
        for w in sorted(adj[v]):
            if w not in seen:
                seen.add(w)
                order.append(w)
    if len(order) != len(aliases):
        raise ValueError("join graph is disconnected")

    inter = frames[order[0]]
    open_edges = set(inc[order[0]])
    for t in order[1:]:
        closed = [e for e in inc[t] if e in open_edges]
        new = [e for e in inc[t] if e not in open_edges]
        merged = inter.merge(frames[t].rename(columns={"cnt": "cnt_t"}), on=closed, how="inner")
        if len(merged) > max_rows:
            raise GuardExceeded(f"intermediate of {len(merged)} rows exceeds guard {max_rows}")
        if merged.empty:
            return 0
        if float(merged["cnt"].max()) * float(merged["cnt_t"].max()) >= 2.0**62:
            raise GuardExceeded("join multiplicity overflows 64-bit counts")
        merged["cnt"] = merged["cnt"] * merged["cnt_t"]
        open_edges = (open_edges - set(closed)) | set(new)
        keep = sorted(open_edges)
        if keep:
            inter = merged.groupby(keep, sort=True)["cnt"].sum().reset_index()
        else:
            inter = pd.DataFrame({"cnt": [merged["cnt"].sum()]})
        if float(inter["cnt"].astype(float).sum()) >= 2.0**62:
            raise GuardExceeded("join size overflows 64-bit counts")
    return int(inter["cnt"].sum())


class ExactEstimator:
    """Drop-in estimator returning exact sub-plan cardinalities (cached)."""

    def __init__(self, graph, scan_results, max_rows: int = DEFAULT_MAX_ROWS):
        self.graph = graph
        self.keys = {a: r.join_keys for a, r in scan_results.items()}
        self.valid = {a: r.join_valid for a, r in scan_results.items()}
        self.max_rows = max_rows
        self._cache: dict[frozenset, float] = {}
        self.calls = 0

    def exact(self, vertices) -> int:
        key = frozenset(vertices)
        if len(key) == 1:
            (v,) = key
            return int(self.graph.cardinality[v])
        edges = self.graph.induced_edges(key)
        tables = {a: self.keys[a] for a in key}
        return exact_cardinality(tables, edges, {a: self.valid[a] for a in key}, self.max_rows)

    def __call__(self, vertices) -> float:
        self.calls += 1
        key = frozenset(vertices)
        if key not in self._cache:
            self._cache[key] = float(self.exact(key))
        return self._cache[key]


# -- metrics ------------------------------------------------------------------------


def _ranks(values) -> np.ndarray:
    order = np.argsort(np.asarray(values, dtype=float), kind="stable")
    ranks = np.empty(len(order), dtype=np.int64)
    ranks[order] = np.arange(1, len(order) + 1)
    return ranks


def permutation_l1(estimates, truths) -> tuple[int, float]:
    """L1 distance between the rank permutations induced by estimates and truths.

    Ties rank by original position in both orderings.  Returns the distance
    and the distance divided by the number of items.
    """
    if len(estimates) != len(truths):
        raise ValueError("estimates and truths differ in length")
    if not len(truths):
        raise ValueError("need at least one item")
    d = int(np.abs(_ranks(estimates) - _ranks(truths)).sum())
    return d, d / len(truths)


def max_permutation_l1(n: int) -> int:
    """Distance of the reversed permutation, the maximum for ``n`` items."""
    return n * n // 2


def accuracy_ratio(estimate: float, truth: float) -> float | None:
    """``estimate / truth``; ``None`` when the truth is zero."""
    if truth < 0:
        raise ValueError("truth must be non-negative")
    if truth == 0:
        return None
    return estimate / truth


# -- plan space ---------------------------------------------------------------------


def leftdeep_orders(graph):
    """Every left-deep order whose prefixes are all connected."""
    n = len(graph)

    def extend(prefix):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for v in graph.frontier(prefix):
            prefix.append(v)
            yield from extend(prefix)
            prefix.pop()

    for v in graph.vertices:
        yield from extend([v])


def exhaustive_leftdeep_costs(graph, estimator, max_vertices: int = MAX_EXHAUSTIVE_VERTICES):
    """``[(order, cost)]`` for every valid left-deep order; cost sums all prefix sizes."""
    if len(graph) > max_vertices:
        raise GuardExceeded(f"exhaustive costing limited to {max_vertices} vertices, graph has {len(graph)}")
    out = []
    for order in leftdeep_orders(graph):
        cost = 0.0
        for k in range(len(order)):
            cost += estimator(order[: k + 1])
        out.append((order, cost))
    return out


def connected_subsets(graph, max_size: int | None = None, min_size: int = 2):
    """Connected vertex subsets as sorted tuples, by size then lexicographically."""
    max_size = len(graph) if max_size is None else min(max_size, len(graph))
    found = set()
    frontier = {frozenset([v]) for v in graph.vertices}
    for size in range(1, max_size + 1):
        if size >= min_size:
            found.update(frontier)
        if size == max_size:
            break
        frontier = {s | {w} for s in frontier for w in graph.frontier(s)}
    return sorted((tuple(sorted(s)) for s in found), key=lambda s: (len(s), s))


# -- reports --------------------------------------------------------------------------


@dataclass
class SubplanRecord:
    vertices: tuple
    size: int
    truth: int
    estimate: float
    ratio: float | None
    zero_truth: bool


@dataclass
class OracleReport:
    query: str
    subplans: list[SubplanRecord] = field(default_factory=list)
    l1: dict = field(default_factory=dict)
    plan_costs: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {}
        for size in sorted({s.size for s in self.subplans}):
            recs = [s for s in self.subplans if s.size == size]
            ratios = [s.ratio for s in recs if s.ratio is not None]
            out[size] = {
                "subplans": len(recs),
                "zero_truth": sum(s.zero_truth for s in recs),
                "median_ratio": float(np.median(ratios)) if ratios else None,
                **self.l1.get(size, {}),
            }
        return out

    def to_json(self) -> dict:
        return {
            "query": self.query,
            "subplans": [{**asdict(s), "vertices": list(s.vertices)} for s in self.subplans],
            "l1": {str(k): v for k, v in self.l1.items()},
            "summary": {str(k): v for k, v in self.summary().items()},
            "plan_costs": self.plan_costs,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["query", "subplan", "size", "truth", "estimate", "ratio", "zero_truth"])
        for s in self.subplans:
            w.writerow(
                [self.query, "-".join(s.vertices), s.size, s.truth, repr(s.estimate),
                 "" if s.ratio is None else repr(s.ratio), int(s.zero_truth)]
            )
        return buf.getvalue()


def build_report(query: str, graph, estimator, exact: ExactEstimator, max_size: int | None = None) -> OracleReport:
    report = OracleReport(query)
    for vs in connected_subsets(graph, max_size):
        truth = exact.exact(vs)
        est = float(estimator(vs))
        ratio = accuracy_ratio(est, truth)
        report.subplans.append(SubplanRecord(vs, len(vs), truth, est, ratio, truth == 0))
    for size in sorted({s.size for s in report.subplans}):
        recs = [s for s in report.subplans if s.size == size]
        d, norm = permutation_l1([s.estimate for s in recs], [s.truth for s in recs])
        mx = max_permutation_l1(len(recs))
        report.l1[size] = {
            "n": len(recs),
            "distance": d,
            "normalized": norm,
            "max": mx,
            "max_normalized": mx / len(recs),
        }
    return report


def reports_to_json(reports) -> str:
    return json.dumps([r.to_json() for r in reports], indent=2)


def reports_to_csv(reports) -> str:
    parts = [r.to_csv() for r in reports]
    if not parts:
        return ""
    head, *rest = parts
    return head + "".join(p.split("\n", 1)[1] for p in rest)
