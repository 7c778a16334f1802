"""Join graph, sub-plan estimation and left-deep plan enumeration.

The enumerator is a depth-first search over connected left-deep prefixes.
Sources are tried in increasing order of a weighted mix of normalised
cardinality and degree; children are visited in increasing order of the
estimated size of the extended prefix; a branch whose accumulated cost
already exceeds the best complete plan is cut; and each source stops after
``max_plans`` complete plans.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import EstimationError, QuerySpecError
from .merge import DEFAULT_FRONTIER_CAP, DEFAULT_MAX_CELLS, MergedTensorView, contract
from .rng import canonical_edge_id
from .scan import parse_predicate, predicate_to_json

# -- query spec ------------------------------------------------------------------


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: str
    predicate: object = None


@dataclass(frozen=True)
class Edge:
    name: str
    left_alias: str
    left_column: str
    right_alias: str
    right_column: str

    @property
    def edge_id(self) -> str:
        return canonical_edge_id(f"{self.left_alias}.{self.left_column}", f"{self.right_alias}.{self.right_column}")

    @property
    def endpoints(self) -> tuple[str, str]:
        return self.left_alias, self.right_alias

    def column_of(self, alias: str) -> str:
        if alias == self.left_alias:
            return self.left_column
        if alias == self.right_alias:
            return self.right_column
        raise KeyError(alias)

    def other(self, alias: str) -> str:
        return self.right_alias if alias == self.left_alias else self.left_alias


def _split_attr(text: str) -> tuple[str, str]:
    alias, sep, col = text.partition(".")
    if not sep or not alias or not col:
        raise QuerySpecError(f"join attribute must be 'alias.column', got {text!r}")
    return alias, col


@dataclass
class QuerySpec:
    tables: list[TableRef]
    joins: list[Edge]

    def __post_init__(self):
        aliases = [t.alias for t in self.tables]
        if len(set(aliases)) != len(aliases):
            raise QuerySpecError(f"duplicate aliases: {aliases}")
        known = set(aliases)
        seen_ids = set()
        for e in self.joins:
            for a in e.endpoints:
                if a not in known:
                    raise QuerySpecError(f"join {e.name} references undeclared alias {a!r}")
            if e.left_alias == e.right_alias:
                raise QuerySpecError(f"join {e.name} is a self-loop on {e.left_alias}")
            if e.edge_id in seen_ids:
                raise QuerySpecError(f"duplicate join predicate {e.edge_id}")
            seen_ids.add(e.edge_id)
        if not _connected(aliases, self.joins):
            raise QuerySpecError("join graph is disconnected (cross products are not supported)")

    @property
    def aliases(self) -> list[str]:
        return [t.alias for t in self.tables]

    def table(self, alias: str) -> TableRef:
        for t in self.tables:
            if t.alias == alias:
                return t
        raise QuerySpecError(f"unknown alias {alias!r}")

    def join_attrs(self, alias: str) -> dict[str, str]:
        """edge_id -> column for every join touching ``alias``."""
        return {e.edge_id: e.column_of(alias) for e in self.joins if alias in e.endpoints}

    @classmethod
    def from_json(cls, data) -> QuerySpec:
        if isinstance(data, (str, Path)):
            data = json.loads(Path(data).read_text())
        try:
            tables = [
                TableRef(t["name"], t.get("alias", t["name"]), parse_predicate(t.get("predicate")))
                for t in data["tables"]
            ]
            joins = []
            for j in data.get("joins", []):
                la, lc = _split_attr(j["left"])
                ra, rc = _split_attr(j["right"])
                name = j.get("id") or canonical_edge_id(j["left"], j["right"])
                joins.append(Edge(name, la, lc, ra, rc))
        except (KeyError, TypeError) as exc:
            raise QuerySpecError(f"malformed query spec: {exc}") from None
        if not tables:
            raise QuerySpecError("query spec has no tables")
        return cls(tables, joins)

    def to_json(self) -> dict:
        return {
            "tables": [
                {"name": t.name, "alias": t.alias, **({"predicate": predicate_to_json(t.predicate)} if t.predicate else {})}
                for t in self.tables
            ],
            "joins": [
                {"id": e.name, "left": f"{e.left_alias}.{e.left_column}", "right": f"{e.right_alias}.{e.right_column}"}
                for e in self.joins
            ],
        }


def _connected(vertices, edges) -> bool:
    vertices = list(vertices)
    if not vertices:
        return False
    adj = {v: set() for v in vertices}
    for e in edges:
        a, b = e.endpoints
        adj[a].add(b)
        adj[b].add(a)
    seen, stack = {vertices[0]}, [vertices[0]]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(vertices)


# -- join graph ------------------------------------------------------------------


class JoinGraph:
    """Vertices are aliases annotated with post-selection cardinality."""

    def __init__(self, cardinalities: dict[str, int], edges: list[Edge]):
        self.cardinality = dict(cardinalities)
        self.edges = list(edges)
        self.vertices = sorted(self.cardinality)
        self._adj: dict[str, set[str]] = {v: set() for v in self.vertices}
        self._incident: dict[str, list[Edge]] = {v: [] for v in self.vertices}
        for e in self.edges:
            a, b = e.endpoints
            if a == b:
                raise QuerySpecError(f"self-loop on {a}")
            if a not in self._adj or b not in self._adj:
                raise QuerySpecError(f"edge {e.name} references an unknown vertex")
            self._adj[a].add(b)
            self._adj[b].add(a)
            self._incident[a].append(e)
            self._incident[b].append(e)
        if not self.vertices:
            raise QuerySpecError("empty join graph")
        if not _connected(self.vertices, self.edges):
            raise QuerySpecError("join graph is disconnected")

    def __len__(self) -> int:
        return len(self.vertices)

    def degree(self, v: str) -> int:
        return len(self._incident[v])

    def neighbors(self, v: str) -> set[str]:
        return self._adj[v]

    def incident(self, v: str) -> list[Edge]:
        return self._incident[v]

    def induced_edges(self, vertices) -> list[Edge]:
        vs = set(vertices)
        return [e for e in self.edges if e.left_alias in vs and e.right_alias in vs]

    def is_connected(self, vertices) -> bool:
        vs = list(vertices)
        return bool(vs) and _connected(vs, self.induced_edges(vs))

    def frontier(self, prefix) -> list[str]:
        """Vertices outside ``prefix`` adjacent to some vertex in it, sorted."""
        inside = set(prefix)
        return sorted({w for v in inside for w in self._adj[v]} - inside)


def build_join_graph(spec: QuerySpec, scan_results: dict) -> JoinGraph:
    missing = [a for a in spec.aliases if a not in scan_results]
    if missing:
        raise QuerySpecError(f"aliases not scanned: {missing}")
    return JoinGraph({a: scan_results[a].exact_count for a in spec.aliases}, spec.joins)


# -- enumeration config --------------------------------------------------------------

MODES = ("greedy", "full-greedy", "limit", "exhaustive")


@dataclass(frozen=True)
class EnumConfig:
    alpha: float = 0.5
    beta: float = 0.5
    max_plans: int | None = 10
    greedy_source: bool = False
    prune: bool = True

    def __post_init__(self):
        if not (0 <= self.alpha <= 1 and 0 <= self.beta <= 1):
            raise ValueError("alpha and beta must lie in [0, 1]")
        if self.max_plans is not None and self.max_plans < 1:
            raise ValueError("max_plans must be positive or None (unbounded)")

    @property
    def mode(self) -> str:
        return enumeration_mode(self)

    @classmethod
    def from_mode(cls, mode: str, alpha: float = 0.5, beta: float = 0.5, prune: bool = True) -> EnumConfig:
        mode = mode.strip().lower()
        if mode == "greedy":
            return cls(alpha, beta, 1, True, prune)
        if mode == "full-greedy":
            return cls(alpha, beta, 1, False, prune)
        if mode == "exhaustive":
            return cls(alpha, beta, None, False, prune)
        if mode.startswith("limit-"):
            try:
                n = int(mode.split("-", 1)[1])
            except ValueError:
                raise ValueError(f"bad mode {mode!r}") from None
            return cls(alpha, beta, n, False, prune)
        raise ValueError(f"unknown enumeration mode {mode!r}; expected greedy, full-greedy, limit-N or exhaustive")

    def to_json(self) -> dict:
        return {**asdict(self), "mode": self.mode}

    @classmethod
    def from_json(cls, data: dict) -> EnumConfig:
        return cls.from_mode(data["mode"], data.get("alpha", 0.5), data.get("beta", 0.5), data.get("prune", True))


def enumeration_mode(config: EnumConfig) -> str:
    if config.greedy_source:
        return "greedy"
    if config.max_plans is None:
        return "exhaustive"
    if config.max_plans == 1:
        return "full-greedy"
    return f"limit-{config.max_plans}"


def vertex_order(graph: JoinGraph, config: EnumConfig = EnumConfig()) -> list[str]:
    """Vertices by increasing ``alpha*card/max_card + beta*deg/max_deg``, ties by alias."""
    if not graph.vertices:
        raise QuerySpecError("empty join graph")
    max_card = max(graph.cardinality.values())
    max_deg = max(graph.degree(v) for v in graph.vertices)

    def f(v):
        card = graph.cardinality[v] / max_card if max_card else 0.0
        deg = graph.degree(v) / max_deg if max_deg else 0.0
        return config.alpha * card + config.beta * deg

    return sorted(graph.vertices, key=lambda v: (f(v), v))


# -- estimators ------------------------------------------------------------------------


class SketchEstimator:
    """Sub-plan cardinality from merged per-edge sketches, cached by vertex set.

    ``sketches`` maps ``(alias, edge_id)`` to the alias's sketch for that
    edge.  Estimates are clamped at zero; the signed value is kept in
    :attr:`raw`.
    """

    def __init__(
        self,
        graph: JoinGraph,
        sketches: dict,
        frontier_cap: int = DEFAULT_FRONTIER_CAP,
        max_cells: int = DEFAULT_MAX_CELLS,
        cache: bool = True,
    ):
        self.graph = graph
        self.sketches = sketches
        self.frontier_cap = frontier_cap
        self.max_cells = max_cells
        self.cache = cache
        self.raw: dict[frozenset, float] = {}
        self._estimates: dict[frozenset, float] = {}
        self._views: dict[tuple, MergedTensorView] = {}
        self.calls = 0
        self.computed = 0

    def view(self, alias: str, edges) -> MergedTensorView:
        key = (alias, frozenset(e.edge_id for e in edges))
        view = self._views.get(key) if self.cache else None
        if view is None:
            view = MergedTensorView(
                [self.sketches[(alias, e.edge_id)] for e in edges],
                [f"{alias}.{e.column_of(alias)}" for e in edges],
            )
            if self.cache:
                self._views[key] = view
        return view

    def __call__(self, vertices) -> float:
        self.calls += 1
        key = frozenset(vertices)
        if self.cache and key in self._estimates:
            return self._estimates[key]
        self.computed += 1
        if len(key) == 1:
            (v,) = key
            value = float(self.graph.cardinality[v])
            raw = value
        else:
            edges = self.graph.induced_edges(key)
            per_table = {a: self.view(a, [e for e in edges if a in e.endpoints]) for a in sorted(key)}
            raw = contract(per_table, [e.edge_id for e in edges], None, self.frontier_cap, self.max_cells).estimate
            value = max(float(raw), 0.0)
        self.raw[key] = float(raw)
        if self.cache:
            self._estimates[key] = value
        return value


def estimate_subplan(C, graph: JoinGraph, sketches: dict, cache: SketchEstimator | None = None) -> float:
    est = cache if cache is not None else SketchEstimator(graph, sketches)
    if not graph.is_connected(C):
        raise QuerySpecError(f"sub-plan {list(C)} is not connected")
    return est(C)


# -- enumeration --------------------------------------------------------------------


@dataclass
class PlanState:
    C: tuple = ()
    cost: float = 0.0
    min_cost: float = float("inf")
    opt_path: tuple = ()
    p: int = 0


@dataclass
class EnumStats:
    plans_completed: int = 0
    prunes: int = 0
    estimator_calls: int = 0
    sources_tried: int = 0
    sources_aborted: int = 0
    plans_per_source: dict = field(default_factory=dict)


@dataclass
class EnumResult:
    opt_path: tuple
    min_cost: float
    prefix_estimates: list
    stats: EnumStats
    mode: str

    def to_json(self) -> dict:
        return {
            "order": list(self.opt_path),
            "prefix_estimates": self.prefix_estimates,
            "total_cost": self.min_cost,
            "mode": self.mode,
            "stats": asdict(self.stats),
        }


class _SourceDone(Exception):
    pass


def greedy_source(graph: JoinGraph, estimator) -> str:
    """Smaller endpoint of the two-way join with the smallest estimate."""
    if len(graph) == 1:
        return graph.vertices[0]
    pairs = sorted({tuple(sorted(e.endpoints)) for e in graph.edges})
    a, b = min(pairs, key=lambda p: (estimator(p), p))
    return min((a, b), key=lambda v: (graph.cardinality[v], v))


def enumerate_plans(graph: JoinGraph, config: EnumConfig, estimator) -> EnumResult:
    state = PlanState()
    stats = EnumStats()
    n = len(graph)

    def estimate(C):
        stats.estimator_calls += 1
        return estimator(C)

    def dfs(C: tuple, cost: float):
        cost += estimate(C)
        if config.prune and cost > state.min_cost:
            stats.prunes += 1
            return
        if len(C) == n:
            if cost < state.min_cost:
                state.min_cost, state.opt_path = cost, C
            state.p += 1
            stats.plans_completed += 1
            if config.max_plans is not None and state.p >= config.max_plans:
                raise _SourceDone
            return
        children = graph.frontier(C)
        e = {v: estimate(C + (v,)) for v in children}
        for v in sorted(children, key=lambda v: (e[v], v)):
            dfs(C + (v,), cost)

    if config.greedy_source:
        sources = [greedy_source(graph, estimate)]
    else:
        sources = vertex_order(graph, config)
    for src in sources:
        state.p = 0
        stats.sources_tried += 1
        try:
            dfs((src,), 0.0)
        except _SourceDone:
            stats.sources_aborted += 1
        stats.plans_per_source[src] = state.p
    if not state.opt_path:
        raise EstimationError("enumeration produced no complete plan")
    prefixes = [estimator(state.opt_path[: k + 1]) for k in range(n)]
    return EnumResult(state.opt_path, state.min_cost, prefixes, stats, enumeration_mode(config))


def plan_cost(order, estimator) -> float:
    """Sum of estimates over every prefix of a left-deep order."""
    return sum(estimator(order[: k + 1]) for k in range(len(order)))
