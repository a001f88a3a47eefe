"""Time each hot kernel on the numba and pure-numpy paths.

    python benchmarks/bench_kernels.py --n 20000 --repeat 5
"""
import argparse
import time

import numpy as np

from mobpred import kernels


def make_inputs(n, seed):
    rng = np.random.default_rng(seed)
    weights = rng.choice([-4, 1], size=n, p=[0.2, 0.8]).astype(np.int64)
    source = np.where(rng.random(n) < 0.3, -1, np.arange(n)).astype(np.int64)
    t = np.cumsum(rng.integers(60, 2400, n)).astype(np.int64)
    lat = 55.7 + np.cumsum(rng.normal(0, 1e-4, n))
    lon = 12.5 + rng.normal(0, 3e-4, n)
    # sticky walk over 40 symbols, 5% missing
    codes = np.zeros(n, np.int64)
    for i in range(1, n):
        codes[i] = codes[i - 1] if rng.random() < 0.7 else rng.integers(0, 40)
    _, codes = np.unique(codes, return_inverse=True)
    codes = codes.astype(np.int64)
    valid = codes.copy()
    codes[rng.random(n) < 0.05] = -1
    n_sym = int(codes.max()) + 1
    pairs = kernels.pair_index(codes)
    return {
        "longest_nonneg_window": (weights,),
        "fill_source": (source, 4),
        "greedy_stops": (t, lat, lon, 50.0, 1800, True),
        "online_predictions": (codes, n_sym, 2, *pairs),
        "prefix_match_lengths": (valid,),
    }


def best_time(fn, args, repeat):
    fn(*args)  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000, help="input length")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    inputs = make_inputs(args.n, args.seed)
    backends = sorted(kernels.IMPLEMENTATIONS)
    print(f"n={args.n} repeat={args.repeat} active backend={kernels.BACKEND}")
    header = f"{'kernel':<24}" + "".join(f"{b + ' (ms)':>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, call_args in inputs.items():
        row = [best_time(kernels.IMPLEMENTATIONS[b][name], call_args, args.repeat) for b in backends]
        line = f"{name:<24}" + "".join(f"{1e3 * x:>14.2f}" for x in row)
        if len(row) == 2:
            line += f"{row[1] / row[0]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
