"""Compare the numba kernels against their pure-numpy twins.

Each backend runs in its own interpreter (the backend is fixed at import
time by ``COMPASS_NUMBA``).  Every workload is run once to warm up, then
timed as the best of ``--repeat`` runs; results must agree bit-for-bit.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def workloads():
    import numpy as np

    from compass.cli import optimize
    from compass.config import RunConfig
    from compass.datagen import synthetic_workload, zipf_keys
    from compass.merge import MergedTensorView, contract
    from compass.planner import EnumConfig
    from compass.sketch import AgmsSketch, FastAgmsSketch, PartitionedSketch, SketchConfig, fa_two_way_estimate

    rng = np.random.default_rng(0)
    cfg = SketchConfig()
    keys = zipf_keys(100_000, 1.1, 100_000, rng)
    other = zipf_keys(100_000, 1.1, 100_000, rng)
    a, b = FastAgmsSketch.build(keys, cfg, "e"), FastAgmsSketch.build(other, cfg, "e")
    pairs = np.stack([zipf_keys(20_000, 1.1, 1000, rng), zipf_keys(20_000, 1.1, 1000, rng)], axis=1)

    tri = {}
    for t, (e1, e2) in {"x": ("e1", "e3"), "y": ("e1", "e2"), "z": ("e2", "e3")}.items():
        tri[t] = MergedTensorView([FastAgmsSketch.build(zipf_keys(10_000, 1.1, 5000, rng), cfg, e) for e in (e1, e2)])
    tables, spec = synthetic_workload(6, 20_000, seed=3, extra_edges=1)
    run_cfg = RunConfig(enum=EnumConfig.from_mode("limit-10"), workers=1)

    return {
        "fa_build_1e5": lambda: int(FastAgmsSketch.build(keys, cfg, "e").counters.sum()),
        "fa_two_way": lambda: fa_two_way_estimate(a, b),
        "part_build_2e4": lambda: int(PartitionedSketch.build(pairs, 11, (64, 64), ["e1", "e2"]).counters.sum()),
        "agms_build_1e3": lambda: int(AgmsSketch.build(keys[:1000], cfg, ["e"]).counters.sum()),
        "triangle_contract": lambda: contract(tri).rows,
        "optimize_6x2e4": lambda: optimize(spec, tables, run_cfg)["plan"]["prefix_estimates"],
    }


def child(repeat: int) -> None:
    from compass._backend import backend_name

    out = {"backend": backend_name(), "results": {}}
    for name, fn in workloads().items():
        value = fn()  # warm-up and JIT compile
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out["results"][name] = {"seconds": best, "value": value}
    json.dump(out, sys.stdout)


def run_backend(flag: str, repeat: int) -> dict:
    env = {**os.environ, "COMPASS_NUMBA": flag}
    proc = subprocess.run(
        [sys.executable, __file__, "--child", "--repeat", str(repeat)], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(proc.stdout)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json", help="write raw timings here")
    p.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args(argv)
    if args.child:
        child(args.repeat)
        return 0

    nb, np_ = run_backend("1", args.repeat), run_backend("0", args.repeat)
    print(f"{'workload':<20} {'numba s':>10} {'numpy s':>10} {'speedup':>8}  identical")
    same_all = True
    for name, r in nb["results"].items():
        q = np_["results"][name]
        same = r["value"] == q["value"]
        same_all &= same
        print(f"{name:<20} {r['seconds']:>10.4f} {q['seconds']:>10.4f} {q['seconds'] / r['seconds']:>7.1f}x  {same}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numba": nb, "numpy": np_}, fh, indent=2)
    return 0 if same_all else 1


if __name__ == "__main__":
    sys.exit(main())
