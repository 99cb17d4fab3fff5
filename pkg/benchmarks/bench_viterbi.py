"""Compare the compiled min-sum kernel against the numpy fallback.

Run with ``python3 benchmarks/bench_viterbi.py [--frames N] [--repeat R]``.
Both backends are timed on the same cost arrays and their outputs are
checked for bit-identity before timings are reported.
"""

import argparse
import timeit

import numpy as np

from airway_hmm import _kernels
from airway_hmm.simulator import WalkConfig, simulate_walk
from airway_hmm.tree import load_tree
from airway_hmm.inference import CostModel


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, nargs="+", default=[1000, 10000, 100000])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--lambda", dest="lam", type=float, default=22.43)
    args = parser.parse_args(argv)

    compiled = _kernels.minsum_pass_compiled
    if compiled is None:
        print("compiled kernel unavailable; build with `pip install -e . --no-build-isolation`")
    tree = load_tree()
    print(f"{'frames':>8} {'numpy [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    for n in args.frames:
        walk = simulate_walk(tree, WalkConfig(n, seed=0))
        cost = CostModel.from_likelihoods(walk.likelihoods, tree, args.lam)
        unary = np.ascontiguousarray(cost.unary)
        trans = np.ascontiguousarray(args.lam * cost.reg.T)
        py = min(timeit.repeat(lambda: _kernels.minsum_pass_python(unary, trans),
                               number=1, repeat=args.repeat)) * 1e3
        if compiled is None:
            print(f"{n:>8} {py:>12.2f} {'-':>12} {'-':>8}")
            continue
        m_py, a_py = _kernels.minsum_pass_python(unary, trans)
        m_cy, a_cy = compiled(unary, trans)
        if not (np.array_equal(m_py, m_cy) and np.array_equal(a_py, a_cy)):
            raise SystemExit(f"backends disagree at {n} frames")
        cy = min(timeit.repeat(lambda: compiled(unary, trans),
                               number=1, repeat=args.repeat)) * 1e3
        print(f"{n:>8} {py:>12.2f} {cy:>12.2f} {py / cy:>7.1f}x")


if __name__ == "__main__":
    main()
