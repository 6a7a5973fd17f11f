"""Compiled vs pure-Python hot kernels.

    python benchmarks/bench_kernels.py [--repeat 3]

Times the Dormand-Prince integrator on an 8-level Liouvillian (64 x 64)
and the telegraph photon Monte Carlo, and prints the speed-up.
"""

import argparse
import time

import numpy as np

from aqmsim import kernels
from aqmsim.atomic import LevelScheme
from aqmsim.lindblad import ProbeBeam, build_hamiltonian, liouvillian, spontaneous_collapse_ops


def generator():
    s = LevelScheme()
    H = build_hamiltonian(s, ProbeBeam(1.0, 1 / 3), cross_couplings=False)
    return liouvillian(H.matrix, spontaneous_collapse_ops(s), s.dim)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--trials", type=int, default=200_000)
    args = ap.parse_args(argv)

    L = generator()
    y0 = np.zeros(L.shape[0], dtype=complex)
    y0[2 * 8 + 2] = 1.0  # |2><2|
    cases = {
        "dopri5 (8-level, 2 us)": lambda k: k.dopri5(L, y0, 2e-6, 1e-10, 1e-13, 1e-10, 10**7),
        f"telegraph ({args.trials} trials)": lambda k: k.telegraph_no_photon(
            args.trials, 4e5, 1e3, 2e4, 3e4, 2e-5, True, 1),
    }
    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        cy = None
        print("compiled kernels not built; timing the Python fallback only")
    print(f"{'kernel':32s} {'python [s]':>11s} {'cython [s]':>11s} {'speed-up':>9s}")
    for name, fn in cases.items():
        tp = best_of(lambda: fn(py), args.repeat)
        if cy is None:
            print(f"{name:32s} {tp:11.4f}")
            continue
        tc = best_of(lambda: fn(cy), args.repeat)
        print(f"{name:32s} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
