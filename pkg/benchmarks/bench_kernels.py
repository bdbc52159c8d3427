"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--n 400] [--capacity 200]

Times a cold ``dcd_solve`` and one full prequential run per backend, and
checks that both backends return identical results.
"""
import argparse
import time

import numpy as np

from budgetsvm import kernels
from budgetsvm.basket import Balance, Exclude, Include, StrategyConfig
from budgetsvm.datagen import DriftSpec, generate, split_train_test
from budgetsvm.model import augmented_diag
from budgetsvm.prequential import prepare, run_prequential


def best_of(repeat, fn):
    times, out = [], None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def bench_solver(backend, n, repeat):
    rng = np.random.default_rng(0)
    X = np.ascontiguousarray(rng.normal(size=(n, 2)) + 0.5)
    y = np.where(X[:, 0] + 0.3 * rng.normal(size=n) > 0.5, 1.0, -1.0)
    qdiag, cbox = augmented_diag(X), np.ones(n)

    def solve():
        alpha, w = np.zeros(n), np.zeros(2)
        b, epochs, _, _ = kernels.get(backend).dcd_solve(X, y, qdiag, cbox, alpha, w, 0.0, 100 * n, 0.01, 0)
        return np.r_[w, b], epochs

    return best_of(repeat, solve)


def bench_stream(backend, capacity, prepared, repeat):
    cfg = StrategyConfig(Include.ADD_ALL, Exclude.REMOVE_FARTHEST, Balance.KEEP_RATIO, capacity=capacity)

    def run():
        r = run_prequential(None, None, cfg, 0.1, backend=backend, prepared=prepared)
        return r.final_ba, r.retrain_count

    return best_of(repeat, run)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--n", type=int, default=400, help="solver problem size")
    ap.add_argument("--capacity", type=int, default=200)
    args = ap.parse_args(argv)

    train, test = split_train_test(generate(DriftSpec("LinearShift", n_total=4000, n_train=1000, seed=0)), 1000)
    prepared = prepare(train, test)
    rows, outputs = [], {}
    for backend in kernels.available():
        t_solve, (wb, epochs) = bench_solver(backend, args.n, args.repeat)
        t_stream, summary = bench_stream(backend, args.capacity, prepared, args.repeat)
        outputs[backend] = (wb.tolist(), epochs, summary)
        rows.append((backend, t_solve, epochs, t_stream, summary[1]))

    print(f"{'backend':<8} {'dcd_solve s':>12} {'epochs':>7} {'stream s':>10} {'refits':>7}")
    for backend, t_solve, epochs, t_stream, refits in rows:
        print(f"{backend:<8} {t_solve:>12.4f} {epochs:>7d} {t_stream:>10.3f} {refits:>7d}")
    if len(rows) == 2:
        (_, s0, _, r0, _), (_, s1, _, r1, _) = rows
        print(f"speedup (python / cython): solver {s1 / s0:.1f}x, stream {r1 / r0:.1f}x")
        same = outputs["cython"] == outputs["python"]
        print(f"identical results: {same}")
        return 0 if same else 1
    print("compiled extension not built; only the fallback was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
