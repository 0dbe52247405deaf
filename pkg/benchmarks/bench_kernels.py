"""Compiled vs pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--L 64] [--repeat 3]
"""
import argparse
import time

import numpy as np

from percolab import _kernels
from percolab.lattice import Boundary, LatticeGeometry
from percolab.measures import Poisson, sample_config


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(L):
    g = LatticeGeometry(2, L, Boundary.OPEN_BOX)
    nbr = g.neighbor_table
    xi = sample_config(g, Poisson(rho_max=4), 0.6, seed=1)
    sparse = sample_config(g, Poisson(rho_max=1), 0.6, seed=2)
    occ = (xi >= 4).astype(np.uint8)
    cap = 10_000 * g.n_sites
    return {
        "sandpile": lambda k: k.sandpile_stabilize(xi, nbr, 4, cap, False, 0),
        "arw": lambda k: k.arw_stabilize(sparse, nbr, 0.5, 7, cap, False, 0),
        "bootstrap": lambda k: k.bootstrap_closure(occ, nbr, 2),
        "labels": lambda k: k.label_components(occ, nbr),
        "bfs": lambda k: k.bfs_distance(occ, nbr),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--L", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels.compiled_backend is None:
        raise SystemExit("compiled kernels are not built; run pip install -e . first")
    print(f"d=2 L={args.L} open box, best of {args.repeat}")
    print(f"{'kernel':10s} {'cython ms':>10s} {'python ms':>10s} {'speedup':>8s}")
    for name, run in cases(args.L).items():
        c = _best(lambda: run(_kernels.compiled_backend), args.repeat)
        p = _best(lambda: run(_kernels.python_backend), args.repeat)
        print(f"{name:10s} {c * 1e3:10.2f} {p * 1e3:10.2f} {p / c:8.1f}x")


if __name__ == "__main__":
    main()
