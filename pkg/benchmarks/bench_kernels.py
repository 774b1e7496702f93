"""Compare the compiled and numpy mask-kernel backends.

    python benchmarks/bench_kernels.py [--size 256] [--repeat 5] [--json out.json]

Also times one full online run per backend, since mask kernels dominate the
detector and metric costs.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from qprop import kernels
from qprop.detector import OracleParams
from qprop.propagation import PropagationConfig
from qprop.runner import run_online
from qprop.scenario import make_scenario


def cases(size: int, rng: np.random.Generator):
    yy, xx = np.mgrid[:size, :size]
    blob = ((yy - size / 2) ** 2 + (xx - size / 3) ** 2 < (size / 4) ** 2).astype(np.uint8)
    noise = (rng.random((size, size)) < 0.3).astype(np.uint8)
    runs = kernels.rle_runs(blob.ravel())
    return {
        "rle_runs": lambda: kernels.rle_runs(noise.ravel()),
        "rle_expand": lambda: kernels.rle_expand(runs, blob.size),
        "inter_union": lambda: kernels.inter_union(blob, noise),
        "boundary_map": lambda: kernels.boundary_map(blob),
        "chebyshev_dilate(r=3)": lambda: kernels.chebyshev_dilate(blob, 3),
        "disk_dilate(r=4)": lambda: kernels.disk_dilate(blob, 4),
    }


def bench(size: int, repeat: int) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    previous = kernels.backend()
    try:
        for name in kernels.available_backends():
            kernels.use_backend(name)
            rng = np.random.default_rng(0)
            for label, fn in cases(size, rng).items():
                number = 20
                best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
                out.setdefault(label, {})[name] = best
            spec = make_scenario("distractors", 0)
            t = min(timeit.repeat(lambda: run_online(spec, OracleParams(), PropagationConfig()), number=1, repeat=repeat))
            out.setdefault("online run (12 frames)", {})[name] = t
    finally:
        kernels.use_backend(previous)
    return out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", help="also write results here")
    args = p.parse_args(argv)

    backends = kernels.available_backends()
    if "native" not in backends:
        print("compiled backend not built; timing the numpy fallback only", file=sys.stderr)
    results = bench(args.size, args.repeat)
    header = f"{'kernel':<24}" + "".join(f"{b:>14}" for b in backends) + ("   speedup" if len(backends) > 1 else "")
    print(f"mask size {args.size}x{args.size}, best of {args.repeat}")
    print(header)
    for label, times in results.items():
        row = f"{label:<24}" + "".join(f"{times[b] * 1e3:>12.3f}ms" for b in backends)
        if len(backends) > 1:
            row += f"{times['python'] / times['native']:>9.1f}x"
        print(row)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"size": args.size, "repeat": args.repeat, "seconds": results}, fh, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
