"""``compass`` command line: ingest, status, optimize, bench, synth.

Exit codes: 0 on success, 1 for user errors (bad arguments, files, specs or
data), 2 when a guard or the estimator fails.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from ._backend import backend_name
from .catalog import Catalog, Schema, load_csv
from .config import RunConfig, default_workers
from .errors import CatalogError, EstimationError, GuardExceeded, QuerySpecError
from .oracle import ExactEstimator, build_report, reports_to_csv
from .planner import EnumConfig, QuerySpec, SketchEstimator, build_join_graph, enumerate_plans
from .scan import scan
from .sketch import SketchConfig


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- pipeline ------------------------------------------------------------------------


def scan_query(spec: QuerySpec, tables, cfg: RunConfig) -> dict:
    """Stage 1: one fused filter+sketch pass per alias.  ``tables`` maps name -> Table."""
    out = {}
    for ref in spec.tables:
        if ref.name not in tables:
            raise CatalogError(f"table {ref.name!r} not found")
        out[ref.alias] = scan(
            tables[ref.name],
            ref.predicate,
            spec.join_attrs(ref.alias),
            cfg.sketch,
            cfg.master_seed,
            cfg.threshold,
            cfg.workers,
        )
    return out


def sketch_map(results: dict) -> dict:
    return {(a, e): sk for a, r in results.items() for e, sk in r.sketches.items()}


def optimize(spec: QuerySpec, tables, cfg: RunConfig) -> dict:
    """Scan, sketch and enumerate; returns the plan report."""
    t0 = time.perf_counter()
    results = scan_query(spec, tables, cfg)
    graph = build_join_graph(spec, results)
    t1 = time.perf_counter()
    estimator = SketchEstimator(graph, sketch_map(results), frontier_cap=cfg.frontier_cap)
    plan = enumerate_plans(graph, cfg.enum, estimator)
    t2 = time.perf_counter()
    return {
        "query": spec.to_json(),
        "config": cfg.to_json(),
        "cardinalities": {a: r.exact_count for a, r in results.items()},
        "materialized": sorted(a for a, r in results.items() if r.materialized is not None),
        "plan": plan.to_json(),
        "timing": {"scan_sketch_s": t1 - t0, "enumeration_s": t2 - t1, "total_s": t2 - t0},
        "backend": backend_name(),
    }


def bench_query(name: str, spec: QuerySpec, tables, cfg: RunConfig, max_size: int | None):
    results = scan_query(spec, tables, cfg)
    graph = build_join_graph(spec, results)
    estimator = SketchEstimator(graph, sketch_map(results), frontier_cap=cfg.frontier_cap)
    return build_report(name, graph, estimator, ExactEstimator(graph, results), max_size)


class _CatalogTables:
    """Lazy name -> Table mapping over a catalog directory."""

    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self._loaded = {}

    def __contains__(self, name):
        return name in self.catalog

    def __getitem__(self, name):
        if name not in self._loaded:
            self._loaded[name] = self.catalog.load(name)
        return self._loaded[name]


# -- commands --------------------------------------------------------------------------


def _open_catalog(path) -> Catalog:
    if path is None:
        raise UserError("--catalog is required")
    cat = Catalog(path)
    if not cat.names():
        raise UserError(f"no catalog at {path}; run 'compass ingest' first")
    return cat


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UserError(f"missing file: {path}") from None
    except json.JSONDecodeError as exc:
        raise UserError(f"{path}: invalid JSON: {exc}") from None


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_ingest(args, cfg: RunConfig) -> int:
    schemas = _read_json(args.schema)
    schemas = schemas.get("tables", schemas)
    base = Path(args.schema).parent
    files = {Path(p).stem: Path(p) for p in args.csv}
    for name in files:
        if name not in schemas:
            raise UserError(f"no schema for table {name!r} (from {files[name]})")
    if not files:
        files = {n: base / s["file"] for n, s in schemas.items() if "file" in s}
    if not files:
        raise UserError("no CSV files given")
    cat = Catalog(cfg.catalog)
    for name, path in sorted(files.items()):
        table = load_csv(path, Schema.from_json(schemas[name]), name, delimiter=args.delimiter)
        cat.save(table)
        print(f"{name}: {table.row_count} rows")
    return 0


def cmd_status(args, cfg: RunConfig) -> int:
    cat = _open_catalog(cfg.catalog)
    for name in cat.names():
        print(f"{name}\t{cat.row_count(name)}")
    return 0


def cmd_optimize(args, cfg: RunConfig) -> int:
    cat = _open_catalog(cfg.catalog)
    spec = QuerySpec.from_json(_read_json(args.query))
    report = optimize(spec, _CatalogTables(cat), cfg)
    _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", cfg.out)
    return 0


def cmd_bench(args, cfg: RunConfig) -> int:
    cat = _open_catalog(cfg.catalog)
    tables = _CatalogTables(cat)
    reports, skipped = [], []
    for path in args.query:
        spec = QuerySpec.from_json(_read_json(path))
        try:
            reports.append(bench_query(Path(path).stem, spec, tables, cfg, args.max_size))
        except GuardExceeded as exc:
            print(f"skipping {path}: {exc}", file=sys.stderr)
            skipped.append({"query": str(path), "reason": str(exc)})
    doc = {"config": cfg.to_json(), "reports": [r.to_json() for r in reports], "skipped": skipped}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if cfg.out:
        out = Path(cfg.out)
        out.write_text(text)
        out.with_suffix(".csv").write_text(reports_to_csv(reports))
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    from .catalog import Catalog as _Cat
    from .datagen import job6a_like, synthetic_workload

    if args.kind == "job6a":
        tables, spec = job6a_like(args.scale, args.data_seed)
    else:
        tables, spec = synthetic_workload(
            args.tables, args.table_rows, args.data_seed, args.extra_edges, args.skew, args.domain
        )
    if cfg.catalog is None:
        raise UserError("--catalog is required")
    cat = _Cat(cfg.catalog)
    for t in tables.values():
        cat.save(t)
    _emit(json.dumps(spec.to_json(), indent=2) + "\n", cfg.out)
    return 0


# -- argument parsing ----------------------------------------------------------------


def _add_run_flags(p):
    p.add_argument("--config", help="RunConfig JSON; flags override its values")
    p.add_argument("--catalog", help="catalog directory")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--rows", type=int, help="sketch rows r (odd)")
    p.add_argument("--buckets", type=int, help="sketch buckets b (power of two)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--max-plans", type=int, help="plans per source; 0 means unbounded")
    p.add_argument("--mode", help="greedy | full-greedy | limit-N | exhaustive")
    p.add_argument("--threshold", type=int, help="materialization threshold")
    p.add_argument("--frontier-cap", type=int)
    p.add_argument("--workers", type=int, help=f"scan threads (default {default_workers()})")
    p.add_argument("--out", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="compass", description="Sketch-based join ordering.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="load CSV files into a catalog")
    _add_run_flags(p)
    p.add_argument("--schema", required=True, help="JSON: {table: {columns: [...], file?}}")
    p.add_argument("--delimiter", default=",")
    p.add_argument("csv", nargs="*", help="CSV files; the file stem names the table")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("status", help="list catalog tables")
    _add_run_flags(p)
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("optimize", help="choose a join order for a query")
    _add_run_flags(p)
    p.add_argument("query", help="query spec JSON")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("bench", help="compare estimates with exact sub-plan sizes")
    _add_run_flags(p)
    p.add_argument("--max-size", type=int, default=None, help="largest sub-plan size")
    p.add_argument("query", nargs="+", help="query spec JSON files")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a synthetic catalog and print its query")
    _add_run_flags(p)
    p.add_argument("--kind", choices=("job6a", "random"), default="job6a")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--tables", type=int, default=5)
    p.add_argument("--table-rows", type=int, default=10_000)
    p.add_argument("--extra-edges", type=int, default=1)
    p.add_argument("--skew", type=float, default=1.1)
    p.add_argument("--domain", type=int, default=1000)
    p.set_defaults(func=cmd_synth)
    return parser


def config_from_args(args) -> RunConfig:
    base = RunConfig.load(args.config) if args.config else RunConfig()
    sk = base.sketch
    sk = SketchConfig(args.rows or sk.rows, args.buckets or sk.buckets)
    enum = base.enum
    alpha = enum.alpha if args.alpha is None else args.alpha
    beta = enum.beta if args.beta is None else args.beta
    if args.mode is not None:
        enum = EnumConfig.from_mode(args.mode, alpha, beta)
    else:
        enum = replace(enum, alpha=alpha, beta=beta)
    if args.max_plans is not None:
        enum = replace(enum, max_plans=args.max_plans or None)
    return replace(
        base,
        master_seed=base.master_seed if args.seed is None else args.seed,
        sketch=sk,
        enum=enum,
        threshold=base.threshold if args.threshold is None else args.threshold,
        frontier_cap=base.frontier_cap if args.frontier_cap is None else args.frontier_cap,
        workers=args.workers or base.workers,
        catalog=args.catalog or base.catalog,
        out=args.out,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        return args.func(args, cfg)
    except (EstimationError, GuardExceeded) as exc:
        print(f"compass: {exc}", file=sys.stderr)
        return 2
    except (UserError, CatalogError, QuerySpecError, ValueError, OSError) as exc:
        print(f"compass: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
