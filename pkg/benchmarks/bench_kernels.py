"""Compare the compiled and pure-Python kernel backends.

Usage: python benchmarks/bench_kernels.py [--sizes 5 10] [--repeat 5]

Times sparse Cholesky factorization, triangular solves, the Q product, the
block kernels and a full certified solve on cube instances.
"""
import argparse
import timeit

import numpy as np

from posesync.experiments import CubeConfig, generate_cube
from posesync.kernels import SparseCholesky, available_backends
from posesync.matrices import apply_Q, build_data_matrices
from posesync.pipeline import solve
from posesync.stiefel import StiefelProduct


def best_of(fn, repeat):
    number = 1
    # enough calls per sample that each sample takes at least ~20 ms
    while timeit.timeit(fn, number=number) < 0.02 and number < 10**5:
        number *= 4
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench_instance(s, repeat, backends):
    graph, _ = generate_cube(CubeConfig(s=s, seed=0))
    rows = []
    mats = {b: build_data_matrices(graph, b) for b in backends}
    M_red = mats[backends[0]].chol
    laplacian = (mats[backends[0]].A_reduced @ np.diag(mats[backends[0]].Omega) @ mats[backends[0]].A_reduced.T)
    rng = np.random.default_rng(0)
    n, d = graph.n, graph.d
    Y = StiefelProduct(n, d, d + 2).random_point(0)
    B = rng.standard_normal((M_red.n, d + 2))
    A = rng.standard_normal((d + 2, d * n))
    S = rng.standard_normal((n, d, d))
    for b in backends:
        chol = SparseCholesky(laplacian, b)
        manifold = StiefelProduct(n, d, d + 2, b)
        cases = {
            "cholesky": lambda: SparseCholesky(laplacian, b),
            "solve": lambda: chol.solve(B),
            "apply_Q": lambda: apply_Q(mats[b], Y),
            "sym_block_diag": lambda: manifold.sym_block_diag(A, A),
            "block_multiply": lambda: manifold.block_multiply(A, S),
        }
        for name, fn in cases.items():
            rows.append((s, n, name, b, best_of(fn, repeat)))
        rows.append((s, n, "full solve", b, min(
            timeit.repeat(lambda: solve(graph, seed=0, backend=b, mats=mats[b]), number=1, repeat=max(1, repeat // 2))
        )))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[5, 10])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    results = []
    for s in args.sizes:
        results.extend(bench_instance(s, args.repeat, backends))
    print(f"{'s':>3} {'n':>5} {'kernel':<16}" + "".join(f"{b:>14}" for b in backends) + ("   speedup" if len(backends) > 1 else ""))
    keys = sorted({(r[0], r[1], r[2]) for r in results}, key=lambda k: (k[0], [r[2] for r in results].index(k[2])))
    for s, n, name in keys:
        times = {r[3]: r[4] for r in results if r[:3] == (s, n, name)}
        line = f"{s:>3} {n:>5} {name:<16}" + "".join(f"{times[b] * 1e3:>12.3f}ms" for b in backends)
        if len(backends) > 1:
            line += f"   {times['python'] / times['cython']:>6.2f}x"
        print(line)


if __name__ == "__main__":
    main()
