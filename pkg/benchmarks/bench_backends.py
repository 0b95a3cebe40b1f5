"""Time the compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_backends.py [--repeat 5] [--quick]

Each kernel is warmed up once per backend (numba compiles on first call),
then timed as the best of ``--repeat`` runs.  Outputs agree to the printed
max difference.
"""

import argparse
import time

import numpy as np

from coulomb_lab._backend import HAVE_NUMBA
from coulomb_lab._hot import dictionary_integrate, metropolis_block, pair_rows, psor_sweeps
from coulomb_lab.lipschitz import lipschitz_dictionary
from coulomb_lab.obstacle import uniform_stencil


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def case_pair_rows(quick):
    n = 500 if quick else 2000
    x = np.random.default_rng(0).normal(size=(n, 2))
    return f"pair_rows n={n}", lambda b: pair_rows(x, 2, backend=b)[0]


def case_metropolis(quick):
    n, sweeps = 64, (20 if quick else 100)
    rng = np.random.default_rng(1)
    x0 = rng.uniform(-1, 1, size=(n, 2))
    normals = rng.normal(size=(sweeps, n, 2))
    uniforms = rng.uniform(size=(sweeps, n))

    def run(b):
        x = x0.copy()
        metropolis_block(x, 2.0, 1.0, [1.0, 1.0], [], 2, 0.1, normals, uniforms, backend=b)
        return x

    return f"metropolis n={n} sweeps={sweeps}", run


def case_psor(quick):
    m = 65 if quick else 129
    h = 1.0 / (m - 1)
    st = uniform_stencil((m, m), h, screening=1.0)
    Y, X = np.meshgrid(np.linspace(0, 1, m), np.linspace(0, 1, m), indexing="ij")
    psi = 0.3 - (X - 0.5) ** 2 - (Y - 0.5) ** 2
    b = np.zeros((m, m))

    def run(bk):
        u = np.where(st.free, 0.0, 0.0)
        psor_sweeps(u, psi, b, st.diag, st.cw, st.ce, st.cs, st.cn, st.free, 1.9, 2000, backend=bk)
        return u

    return f"psor {m}x{m} 2000 sweeps", run


def case_dictionary(quick):
    m = 20000 if quick else 171000
    dic = lipschitz_dictionary(2)
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, size=(m, 2))
    w = rng.uniform(size=m)
    return (f"dictionary {len(dic)} fns x {m} pts",
            lambda b: dictionary_integrate(dic.kind, dic.centers, dic.offsets, dic.clips, x, w, backend=b))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba not importable; only the numpy backend exists")
    print(f"{'kernel':40s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for case in (case_pair_rows, case_metropolis, case_psor, case_dictionary):
        name, fn = case(args.quick)
        tn, on = best_of(lambda: fn("numba"), args.repeat)
        tp, op = best_of(lambda: fn("numpy"), args.repeat)
        diff = float(np.max(np.abs(np.asarray(on) - np.asarray(op))))
        print(f"{name:40s} {tn:11.4f} {tp:11.4f} {tp / tn:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
