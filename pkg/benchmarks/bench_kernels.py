"""Compare the compiled and NumPy kernel backends.

Times block-sparse products on block-aligned and element-level random masks
and the masked-gradient kernel, single-threaded, and prints CSV.

    python benchmarks/bench_kernels.py --n 1024 --batch 64 --repeats 20
"""
import argparse
import sys
import time

import numpy as np

from pixelflykit import _backend
from pixelflykit.patterns import PatternSpec, generate_pattern
from pixelflykit.sparse import BlockSparseMatrix
from pixelflykit.toynet import random_column_mask


def _time(fn, repeats):
    fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return float(np.mean(samples)), float(np.std(samples))


def bench_spmm(k, mask, batch, repeats, rng):
    a = BlockSparseMatrix.random(mask, rng)
    x = np.ascontiguousarray(rng.standard_normal((mask.cols, batch)))
    out = np.zeros((mask.rows, batch))

    def run():
        out.fill(0.0)
        k.bsr_spmm(a.mask.indptr, a.mask.block_cols, a.values, x, out, 1)

    return _time(run, repeats)


def bench_masked_grad(k, d, m, n, nnz_per_col, repeats, rng):
    M = random_column_mask(d, m, nnz_per_col, rng)
    rows, cols = (np.ascontiguousarray(v, dtype=np.int64) for v in np.nonzero(M))
    X = np.ascontiguousarray(rng.standard_normal((d, n)))
    G = np.ascontiguousarray(rng.standard_normal((m, n)))
    out = np.empty(rows.size)
    return _time(lambda: k.masked_outer_entries(X, G, rows, cols, out, 1), repeats)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--density", type=float, default=0.1)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    backends = _backend.available_backends()
    print("kernel,case,backend,mean_ms,std_ms")
    for block in (32, 8, 1):
        mask = generate_pattern(PatternSpec("random", args.n, args.n, block, density=args.density, seed=args.seed))
        for name in backends:
            mean, std = bench_spmm(_backend.get_kernels(name), mask, args.batch, args.repeats,
                                   np.random.default_rng(args.seed))
            print(f"bsr_spmm,block{block},{name},{mean:.4f},{std:.4f}")
    for name in backends:
        mean, std = bench_masked_grad(_backend.get_kernels(name), 10, 1024, 20, 5, args.repeats,
                                      np.random.default_rng(args.seed))
        print(f"masked_outer_entries,d10_m1024_n20_k5,{name},{mean:.4f},{std:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
