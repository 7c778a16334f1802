"""Shared fixtures-by-function for tests that need scanned workloads."""

from compass.cli import scan_query, sketch_map
from compass.config import RunConfig
from compass.datagen import synthetic_workload
from compass.planner import SketchEstimator, build_join_graph
from compass.sketch import SketchConfig


def prepare(tables, spec, cfg=None):
    cfg = cfg or RunConfig(sketch=SketchConfig(5, 64), workers=1)
    results = scan_query(spec, tables, cfg)
    return build_join_graph(spec, results), results, sketch_map(results)


def synthetic_graph(n, rows=300, seed=0, extra=1, cfg=None, **kw):
    tables, spec = synthetic_workload(n, rows, seed, extra, domain=50, **kw)
    graph, results, sketches = prepare(tables, spec, cfg)
    return graph, results, sketches


def sketch_estimator(graph, sketches, **kw):
    return SketchEstimator(graph, sketches, **kw)
