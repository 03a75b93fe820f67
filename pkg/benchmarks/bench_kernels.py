"""Compare the compiled and NumPy offset kernels on a modulus scan and a mollification.

    python benchmarks/bench_kernels.py [--n 256] [--theta 0.1] [--repeat 3]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from carleman_lab import kernels
from carleman_lab.grid import build_grid
from carleman_lab.potentials import build_mollifier, disk_offsets, mollify, modulus_of_continuity, sample_potential


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--theta", type=float, default=0.1)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    g = build_grid("torus", args.n, 1.0)
    V = sample_potential("weierstrass{alpha=0.5,levels=6}", g)
    kernel = build_mollifier("bump")
    taps = len(disk_offsets(g, args.theta)[0])
    jobs = {
        "modulus": lambda: modulus_of_continuity(V, args.theta),
        "mollify": lambda: mollify(V, args.theta, kernel),
    }
    print(f"grid {args.n}x{args.n}, theta {args.theta}, {taps} offsets, best of {args.repeat}")
    results = {}
    for name in kernels.available_backends():
        kernels.use_backend(name)
        results[name] = {job: min(timeit.repeat(fn, number=1, repeat=args.repeat)) for job, fn in jobs.items()}
        outputs = (jobs["modulus"](), jobs["mollify"]().values)
        results[name]["_out"] = outputs
    names = list(results)
    for job in jobs:
        row = "  ".join(f"{n} {results[n][job] * 1e3:9.1f} ms" for n in names)
        speedup = ""
        if "python" in results and "cython" in results:
            speedup = f"  speedup x{results['python'][job] / results['cython'][job]:.1f}"
        print(f"{job:8s} {row}{speedup}")
    if len(names) == 2:
        a, b = (results[n]["_out"] for n in names)
        same = a[0] == b[0] and np.array_equal(a[1], b[1])
        print(f"outputs bit-identical across backends: {same}")


if __name__ == "__main__":
    main()
