"""Benchmark the compiled kernels against the pure-Python/SciPy fallback.

The lane is chosen at import time from ``FPPLAB_NO_NUMBA``, so each lane runs
in its own subprocess.  Results are identical across lanes; only wall-clock
differs.

Usage: python benchmarks/bench_kernels.py [--side N] [--walks N]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, os, time
import numpy as np
from fpplab.lattice import build_box
from fpplab.fpp import IidModel, fpp_distances
from fpplab.rcm import homogeneous_environment, monte_carlo_green
from fpplab.rng import RngStream
from fpplab.kernels import USE_NUMBA

side = __SIDE__
walks = __WALKS__
rng = RngStream(seed=12345)

box = build_box(3, (side,) * 3)
model = IidModel(law=("exponential", 1.0), mode="edge")
w = model.sample(box, rng)
src = [box.center_vertex()]
fpp_distances(w, src)  # warm-up (jit compile)
t0 = time.perf_counter()
dm = fpp_distances(w, src)
t_dijkstra = time.perf_counter() - t0

env = homogeneous_environment(box, h=0.2)
monte_carlo_green(env, box.center_vertex(), 10, rng.split(1))  # warm-up
t0 = time.perf_counter()
occ = monte_carlo_green(env, box.center_vertex(), walks, rng.split(2))
t_walks = time.perf_counter() - t0

print(json.dumps({
    "numba": USE_NUMBA,
    "dijkstra_s": t_dijkstra,
    "walks_s": t_walks,
    "dijkstra_checksum": float(np.sum(dm.distances[np.isfinite(dm.distances)])),
    "walks_checksum": float(np.sum(occ)),
}))
"""


def run_lane(no_numba: bool, side: int, walks: int) -> dict:
    env = dict(os.environ, FPPLAB_NO_NUMBA="1" if no_numba else "0")
    out = subprocess.run(
        [sys.executable, "-c", _WORKER.replace("__SIDE__", str(side)).replace("__WALKS__", str(walks))],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--side", type=int, default=48, help="cube side for the Dijkstra graph")
    parser.add_argument("--walks", type=int, default=20000, help="killed walks for the occupation kernel")
    args = parser.parse_args()

    fast = run_lane(False, args.side, args.walks)
    slow = run_lane(True, args.side, args.walks)

    print(f"graph: {args.side}^3 lattice, {args.walks} killed walks")
    print(f"{'kernel':<12} {'numba lane':>12} {'fallback':>12} {'speedup':>9}")
    for key, label in (("dijkstra_s", "dijkstra"), ("walks_s", "walks")):
        print(f"{label:<12} {fast[key]:>11.3f}s {slow[key]:>11.3f}s {slow[key] / fast[key]:>8.1f}x")
    for key in ("dijkstra_checksum", "walks_checksum"):
        tag = "identical" if fast[key] == slow[key] else f"MISMATCH ({fast[key]} vs {slow[key]})"
        print(f"{key}: {tag}")


if __name__ == "__main__":
    main()
