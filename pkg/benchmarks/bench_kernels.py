"""Compare the numba step kernel with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [n ...]
"""
import sys

from smdsr.bench import run_bench

if __name__ == "__main__":
    sizes = [int(a) for a in sys.argv[1:]] or [100, 500, 2000]
    for n in sizes:
        for line in run_bench(n=n, steps=2000):
            print(line)
        print()
