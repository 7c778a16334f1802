"""Multi-way join estimation from per-edge Fast-AGMS sketches by merging.

A table joined on several edges has one 1-D sketch per edge.  Its merged
tensor entry at bucket indices ``(i_1, ..., i_k)`` is the constituent value
of smallest magnitude (earliest constituent on ties).  The sub-plan estimate
for one sketch row is the sum, over one bucket index per edge, of the
product of every table's merged entry; the median over rows is reported.

Merged tensors are never materialised.  A table's tensor is represented as
a *selector*: per edge a key vector (``|value| * k + position``, so the
smallest key is the merge winner) and a payoff vector.  Contracting a
vector or a frontier tensor into a selector only needs a sort by key and
prefix sums, so cost scales with the frontier size rather than with
``buckets ** k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import EstimationError, SketchMismatchError
from .sketch import FastAgmsSketch, exact_row_dots, median_of_rows

DEFAULT_FRONTIER_CAP = 3
DEFAULT_MAX_CELLS = 1 << 24

_INF = np.iinfo(np.int64).max


def merge_entry(values):
    """Left fold of the pairwise rule: keep left when ``|left| <= |right|``."""
    it = iter(values)
    try:
        acc = next(it)
    except StopIteration:
        raise ValueError("merge_entry needs at least one value") from None
    for v in it:
        if abs(acc) > abs(v):
            acc = v
    return acc


class MergedTensorView:
    """Implicit merged tensor of one table over its incident edges.

    ``constituents`` are the table's per-edge sketches; they are put in
    canonical order (by ``attributes`` when given, then edge id), which
    decides ties in :func:`merge_entry`.
    """

    def __init__(self, constituents, attributes=None):
        constituents = list(constituents)
        if not constituents:
            raise ValueError("a merged view needs at least one sketch")
        attributes = list(attributes) if attributes is not None else [""] * len(constituents)
        ranked = sorted(zip(attributes, [c.edge_id for c in constituents], range(len(constituents))))
        self.constituents: list[FastAgmsSketch] = [constituents[i] for _, _, i in ranked]
        self.attributes = [a for a, _, _ in ranked]
        first = self.constituents[0].config
        for c in self.constituents[1:]:
            if c.config != first:
                raise SketchMismatchError("constituents of a merged view must share a config")
        if len({c.edge_id for c in self.constituents}) != len(self.constituents):
            raise SketchMismatchError("duplicate edge in merged view")
        self._selector = None
        self._sortpos = {}

    @property
    def config(self):
        return self.constituents[0].config

    @property
    def edges(self) -> list[str]:
        return [c.edge_id for c in self.constituents]

    def entry(self, row: int, indices) -> int:
        return merge_entry(int(c.counters[row, i]) for c, i in zip(self.constituents, indices))

    def dense(self, row: int) -> np.ndarray:
        """Materialised tensor for one row (test/debug use; size ``buckets ** k``)."""
        b = self.config.buckets
        out = np.empty((b,) * len(self.constituents), dtype=np.int64)
        for idx in np.ndindex(out.shape):
            out[idx] = self.entry(row, idx)
        return out

    def fold_to(self, buckets: int) -> MergedTensorView:
        if buckets == self.config.buckets:
            return self
        view = MergedTensorView.__new__(MergedTensorView)
        view.constituents = [c.fold_to(buckets) for c in self.constituents]
        view.attributes = list(self.attributes)
        view._selector = None
        view._sortpos = {}
        return view

    def selector(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Per edge: (key, payoff) arrays of shape (rows, buckets)."""
        if self._selector is None:
            k = len(self.constituents)
            self._selector = {
                c.edge_id: (np.abs(c.counters) * k + pos, c.counters.astype(np.float64))
                for pos, c in enumerate(self.constituents)
            }
        return self._selector


    def sort_pos(self, closed: str, new: str):
        """Cached :func:`kernels.sort_pos` for the keys of two of this view's edges."""
        hit = self._sortpos.get((closed, new))
        if hit is None:
            sel = self.selector()
            hit = self._sortpos[(closed, new)] = kernels.sort_pos(sel[closed][0], sel[new][0])
        return hit


def as_view(item) -> MergedTensorView:
    if isinstance(item, MergedTensorView):
        return item
    if isinstance(item, FastAgmsSketch):
        return MergedTensorView([item])
    return MergedTensorView(item)


@dataclass
class Contraction:
    """Per-row estimates plus how they were obtained."""

    rows: list
    buckets: int
    max_frontier: int
    order: list[str] = field(default_factory=list)
    peeled: list[str] = field(default_factory=list)

    @property
    def estimate(self):
        return median_of_rows(self.rows)


def _endpoints(views: dict[str, MergedTensorView], edges) -> dict[str, list[str]]:
    ends: dict[str, list[str]] = {}
    for name in sorted(views):
        for e in views[name].edges:
            ends.setdefault(e, []).append(name)
    wanted = set(ends) if edges is None else set(edges)
    if set(ends) != wanted:
        raise SketchMismatchError(
            f"views cover edges {sorted(ends)} but the sub-plan has {sorted(wanted)}"
        )
    for e, tabs in ends.items():
        if len(tabs) != 2:
            raise SketchMismatchError(f"edge {e} must have exactly two endpoints, found {tabs}")
    return ends


def frontier_sizes(order, table_edges: dict[str, list[str]]) -> list[int]:
    """Number of open edges after each step of a contraction order."""
    open_edges: set[str] = set()
    sizes = []
    for t in order:
        for e in table_edges[t]:
            open_edges.symmetric_difference_update([e])
        sizes.append(len(open_edges))
    return sizes


def greedy_order(table_edges: dict[str, list[str]]) -> list[str]:
    """Deterministic order keeping the frontier small: fewest open edges after the step."""
    remaining = sorted(table_edges)
    open_edges: set[str] = set()
    order = []
    while remaining:
        def score(t):
            inc = set(table_edges[t])
            closed = len(inc & open_edges)
            return (len(open_edges ^ inc), -closed, t)

        best = min(remaining, key=score)
        order.append(best)
        open_edges ^= set(table_edges[best])
        remaining.remove(best)
    return order


def _peel_plan(table_edges: dict[str, list[str]], ends) -> tuple[list[tuple[str, str, str]], set[str]]:
    """Leaf-elimination sequence ``(leaf, edge, target)`` and the tables left in the cyclic core."""
    edges = {t: set(es) for t, es in table_edges.items()}
    alive = set(edges)
    steps = []
    while True:
        leaves = sorted(t for t in alive if len(edges[t]) == 1)
        if not leaves:
            break
        t = leaves[0]
        (e,) = edges[t]
        u = ends[e][0] if ends[e][1] == t else ends[e][1]
        steps.append((t, e, u))
        alive.discard(t)
        edges[u].discard(e)
        if not edges[u]:
            alive.discard(u)
            break
    return steps, alive


def _combine(parts, rows: int):
    """Winner key/payoff over the product space of several edges (row-major)."""
    if not parts:
        return np.full((rows, 1), _INF, dtype=np.int64), np.zeros((rows, 1))
    key, pay = parts[0]
    for k2, p2 in parts[1:]:
        key, pay = kernels.combine_pair(key, pay, k2, p2)
    return key, pay


def _frontier_contract(order, selectors, table_edges, rows: int, b: int, views=None) -> np.ndarray:
    F = np.ones((rows,))
    axes: list[str] = []
    # the first table's two-edge factor stays implicit until a step can consume it
    pending = None
    n = len(order)
    for i, t in enumerate(order):
        sel = selectors[t]
        mine = [e for e in table_edges[t] if e in sel]
        closed = [e for e in axes if e in sel]
        others = [e for e in axes if e not in sel]
        new = [e for e in mine if e not in axes]
        if not axes and len(new) == 2 and i + 1 < n:
            pending, axes = {e: sel[e] for e in new}, new
            continue
        implicit = None
        if pending is not None:
            if len(closed) == 1 and len(others) == 1 and new:
                implicit = (*pending[others[0]], *pending[closed[0]])
            else:
                F = kernels.combine_pair(*pending[axes[0]], *pending[axes[1]])[1].reshape(rows, b, b)
            pending = None
        if implicit is None:
            perm = [0] + [1 + axes.index(e) for e in others + closed]
            Fm = F.transpose(perm).reshape(rows, b ** len(others), b ** len(closed))
        key_a, val_a = _combine([sel[e] for e in closed], rows)
        key_b, val_b = _combine([sel[e] for e in new], rows)
        if closed and new:
            last = None
            if i == n - 2:
                lsel = selectors[order[-1]]
                if set(lsel) == set(others + new):
                    last = (*_combine([lsel[e] for e in others], rows), *_combine([lsel[e] for e in new], rows))
            sortpos = None
            if views is not None and len(closed) == 1 and len(new) == 1:
                sortpos = views[t].sort_pos(closed[0], new[0])
            out = kernels.select_fused(None if implicit else Fm, implicit, key_a, val_a, key_b, val_b, last, sortpos)
            if last is not None:
                return out.reshape(rows)
        elif not new:
            out = kernels.close_step(Fm, val_a)[:, :, None]
        else:
            out = Fm * val_b[:, None, :]
        axes = others + new
        F = out.reshape((rows,) + (b,) * len(axes))
    return F.reshape(rows)


def _fold_level(b: int, rows: int, dims: int, max_cells: int) -> int:
    if dims <= 1:
        return b
    while b > 2 and rows * b**dims > max_cells:
        b //= 2
    if rows * b**dims > max_cells:
        raise EstimationError(f"frontier of {dims} edges exceeds {max_cells} cells even at {b} buckets")
    return b


def contract(
    per_table,
    edges=None,
    order=None,
    frontier_cap: int = DEFAULT_FRONTIER_CAP,
    max_cells: int = DEFAULT_MAX_CELLS,
) -> Contraction:
    """Per-row merged-sketch estimates for a connected sub-plan.

    ``per_table`` maps table name to a :class:`MergedTensorView` (or a single
    sketch).  With ``order`` the frontier contraction follows that table
    order literally; without it, leaf tables are absorbed first and the
    remaining cyclic core is contracted in :func:`greedy_order`.  All
    sketches are folded uniformly when ``rows * buckets ** frontier`` would
    exceed ``max_cells``.
    """
    views = {name: as_view(v) for name, v in per_table.items()}
    if len(views) < 2:
        raise ValueError("a join sub-plan needs at least two tables")
    ends = _endpoints(views, edges)
    table_edges = {t: v.edges for t, v in views.items()}
    config = next(iter(views.values())).config
    for v in views.values():
        if v.config != config:
            raise SketchMismatchError("all sketches of a sub-plan must share a config")
    for e, (t1, t2) in ends.items():
        s1 = next(c for c in views[t1].constituents if c.edge_id == e)
        s2 = next(c for c in views[t2].constituents if c.edge_id == e)
        if not s1.same_family(s2):
            raise SketchMismatchError(f"edge {e}: endpoint sketches use different seeds")
    rows, b = config.rows, config.buckets

    if len(views) == 2 and len(ends) == 1:
        t1, t2 = sorted(views)
        return Contraction(
            exact_row_dots(views[t1].constituents[0].counters, views[t2].constituents[0].counters),
            b,
            1,
            [t1, t2],
        )

    if order is not None:
        order = list(order)
        if sorted(order) != sorted(views):
            raise ValueError("order must list every table exactly once")
        steps, core = [], set(order)
        core_order = order
    else:
        steps, core = _peel_plan(table_edges, ends)
        core_order = greedy_order({t: table_edges[t] for t in core}) if core else []
    remaining_edges = {t: [e for e in table_edges[t] if all(e != s[1] for s in steps)] for t in core}
    dims = max(frontier_sizes(core_order, remaining_edges), default=1)
    if dims > frontier_cap:
        raise EstimationError(f"contraction frontier of {dims} edges exceeds the cap of {frontier_cap}")
    fb = _fold_level(b, rows, dims, max_cells)
    folded = {t: v.fold_to(fb) for t, v in views.items()}
    selectors = {t: dict(v.selector()) for t, v in folded.items()}

    result = None
    for leaf, e, target in steps:
        x = selectors[leaf][e][1]
        key_e, pay_e = selectors[target].pop(e)
        if not selectors[target]:
            result = kernels.close_step(x[:, None, :], pay_e)[:, 0]
            break
        for other, (key_o, pay_o) in list(selectors[target].items()):
            new_pay = kernels.select_fused(
                x[:, None, :], None, key_e, pay_e, key_o, pay_o, sortpos=folded[target].sort_pos(e, other)
            )[:, 0, :]
            selectors[target][other] = (key_o, new_pay)
        del selectors[leaf]
    if result is None:
        result = _frontier_contract(core_order, selectors, table_edges, rows, fb, folded)
    return Contraction(
        [float(v) for v in result], fb, dims, core_order, [s[0] for s in steps]
    )


def merged_estimate(per_table, edges=None, order=None, frontier_cap=DEFAULT_FRONTIER_CAP, max_cells=DEFAULT_MAX_CELLS):
    """Signed median-of-rows merged-sketch estimate (see :func:`contract`)."""
    return contract(per_table, edges, order, frontier_cap, max_cells).estimate
