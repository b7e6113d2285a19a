"""Time the numba and numpy implementations of each hot kernel.

Run with ``python3 benchmarks/bench_backends.py``; ``--quick`` shrinks the
workloads.  Each kernel is warmed up once per backend (so numba compile
time is excluded) and then timed over ``--repeat`` runs; the best time is
reported together with the speed-up of numba over numpy and a check that
both backends returned the same answer.
"""
import argparse
import time

import numpy as np

from mmrw import _kernels
from mmrw._accel import NUMBA_AVAILABLE, use_backend
from mmrw.model import reference_model
from mmrw.occupation import _outcome_tables


def _best(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def sweep_case(L, model):
    e = np.zeros((L + 1, L + 1, model.s0))
    e[0, 0, 0] = 1.0

    def run():
        return _kernels.fundamental_sweeps(e, model.blocks, 1e-14, 1_000_000)[0]
    return run


def simulate_case(n_paths, model, L=64):
    cdf, d1, d2, nxt = _outcome_tables(model)
    key = _kernels.seed_key(2024)
    nstates = (L + 1) ** 2 * model.s0

    def run():
        sums = np.zeros(nstates, dtype=np.int64)
        sumsq = np.zeros(nstates, dtype=np.int64)
        _kernels.simulate_chunk(cdf, d1, d2, nxt, (0, 0, 0), L, key, 0, n_paths, 1_000_000, sums, sumsq)
        return sums
    return run


def power_case(n, count):
    rng = np.random.default_rng(7)
    mats = [rng.random((n, n)) for _ in range(count)]
    ones = np.ones(n)

    def run():
        return np.array([_kernels.power_iteration(m, ones, 1e-3 * m.sum(1).max(), 1e-13, 100_000)[1]
                         for m in mats])
    return run


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--quick", action="store_true", help="small workloads")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")

    r1, r2 = reference_model("R1"), reference_model("R2")
    scale = 4 if args.quick else 1
    cases = [
        ("sweep R1 L=64", sweep_case(64 // scale, r1), "allclose"),
        ("sweep R2 L=64", sweep_case(64 // scale, r2), "allclose"),
        (f"simulate R1 {200_000 // scale} paths", simulate_case(200_000 // scale, r1), "equal"),
        (f"simulate R2 {200_000 // scale} paths", simulate_case(200_000 // scale, r2), "equal"),
        ("power 2x2 x2000", power_case(2, 2000 // scale), "allclose"),
        ("power 40x40 x200", power_case(40, 200 // scale), "allclose"),
    ]
    print(f"{'kernel':<30}{'numpy [s]':>12}{'numba [s]':>12}{'speed-up':>10}  agree")
    for name, fn, how in cases:
        times, outs = {}, {}
        for backend in ("numpy", "numba"):
            with use_backend(backend):
                fn()
                times[backend], outs[backend] = _best(fn, args.repeat)
        if how == "equal":
            agree = bool(np.array_equal(outs["numpy"], outs["numba"]))
        else:
            agree = bool(np.allclose(outs["numpy"], outs["numba"], rtol=1e-12, atol=1e-300))
        print(f"{name:<30}{times['numpy']:>12.4f}{times['numba']:>12.4f}"
              f"{times['numpy'] / times['numba']:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
