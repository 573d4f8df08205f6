"""Time the NumPy and Cython kernels side by side.

    python benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from manifold_track import _backend, _pykernels
from manifold_track.experiment import monte_carlo
from manifold_track.scenarios import load_scenario


def kernel_cases(rng):
    a = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    a = a * np.sign(np.linalg.det(a)) + 0.05 * rng.normal(size=(3, 3))
    x, y = np.linalg.qr(rng.normal(size=(2, 3, 3)))[0]
    x, y = x * np.sign(np.linalg.det(x)), y * np.sign(np.linalg.det(y))
    v = rng.normal(size=(9, 15))
    b = rng.uniform(-3, 3, size=(8, 3))
    p = rng.uniform(-1, 1, size=3)
    s = np.linalg.norm(b - p, axis=1)
    init = b.mean(axis=0)
    return {
        "qfactor": lambda m: m.qfactor(a),
        "build_pi": lambda m: m.build_pi(a),
        "transport_vectors": lambda m: m.transport_vectors(v, x, y),
        "gn_point": lambda m: m.gn_point(s, b, init, 1e-10, 50),
    }


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--trials", type=int, default=3, help="trials for the end-to-end timing")
    args = ap.parse_args()

    if "cython" not in _backend.available():
        print("Cython extension not built; run `python setup.py build_ext --inplace` first")
        return 1
    from manifold_track import _ckernels

    rng = np.random.default_rng(0)
    print(f"{'kernel':20s} {'python (us)':>12s} {'cython (us)':>12s} {'speedup':>8s}")
    for name, call in kernel_cases(rng).items():
        tp = best_of(lambda: call(_pykernels), args.repeat, 2000)
        tc = best_of(lambda: call(_ckernels), args.repeat, 2000)
        print(f"{name:20s} {tp * 1e6:12.2f} {tc * 1e6:12.2f} {tp / tc:7.1f}x")

    spec = load_scenario("upath")
    kinds = ["EKF", "EKFRie", "UKF", "UKFRie"]
    times = {}
    for backend in ("python", "cython"):
        prev = _backend.set_backend(backend)
        try:
            times[backend] = best_of(lambda: monte_carlo(spec, kinds, args.trials, 0, workers=1),
                                     max(1, args.repeat // 2), 1)
        finally:
            _backend.set_backend(prev)
    tp, tc = times["python"], times["cython"]
    print(f"\nU-path, 4 filters, {args.trials} trials: python {tp:.2f}s, cython {tc:.2f}s ({tp / tc:.2f}x)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
