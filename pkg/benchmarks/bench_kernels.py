"""Time the compiled kernels against their numpy fallbacks.

Run ``python3 benchmarks/bench_kernels.py``. The numba timings exclude
compilation, which happens once in a warm-up call.
"""
import argparse
import timeit

import numpy as np

from qcevents import _accel
from qcevents.lp import deterministic_strategies, pr_box, strategy_matrix


def _stacks(rng, n, d):
    return [rng.normal(size=(n, dd, dd)) + 1j * rng.normal(size=(n, dd, dd)) for dd in (d, d)]


def _simplex_problem():
    p = pr_box()
    strategies = deterministic_strategies(2, 2, 2, 2)
    settings = [(x, y) for x in range(2) for y in range(2)]
    a = np.vstack([strategy_matrix(p.shape, strategies, settings), np.ones((1, len(strategies)))])
    b = np.append(np.concatenate([p[:, :, x, y].reshape(-1) for x, y in settings]), 1.0)
    return np.ascontiguousarray(a), np.ascontiguousarray(b)


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not _accel.ENABLE_NUMBA:
        print("numba disabled (QCE_DISABLE_NUMBA set); only numpy timings are meaningful")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}")
    for n, d in ((16, 4), (16, 8), (32, 16), (8, 48)):
        left, right = _stacks(rng, n, d)
        _accel._commutator_max_abs_loops(left, right)
        fast = _best(lambda: _accel._commutator_max_abs_loops(left, right), args.repeat)
        slow = _best(lambda: _accel._commutator_max_abs_numpy(left, right), args.repeat)
        print(f"{f'commutator n={n} d={d}':<28}{fast * 1e3:>12.3f}{slow * 1e3:>12.3f}{slow / fast:>10.1f}")
    a, b = _simplex_problem()
    _accel.simplex_phase1(a, b, 1e-11, 1000)
    py = getattr(_accel.simplex_phase1, "py_func", _accel.simplex_phase1)
    fast = _best(lambda: _accel.simplex_phase1(a, b, 1e-11, 1000), args.repeat)
    slow = _best(lambda: py(a, b, 1e-11, 1000), args.repeat)
    print(f"{'simplex PR box':<28}{fast * 1e3:>12.3f}{slow * 1e3:>12.3f}{slow / fast:>10.1f}")


if __name__ == "__main__":
    main()
