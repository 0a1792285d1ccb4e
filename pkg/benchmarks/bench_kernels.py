"""Compare the compiled and numpy kernel backends.

Times each kernel on random dense systems and a full IEEE 39-bus solve
under each backend (the solve runs in a subprocess so the import-time
backend choice takes effect).

    python benchmarks/bench_kernels.py [--sizes 39 118 300] [--repeat 5]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from rasswitch import kernels

SOLVE = (
    "import timeit; from rasswitch.case import load_ieee39, SystemState; "
    "from rasswitch.powerflow import solve_powerflow; c = load_ieee39(); s = SystemState.initial(c); "
    "solve_powerflow(s); print(min(timeit.repeat(lambda: solve_powerflow(s), number=20, repeat={r})) / 20)"
)


def _system(n: int, rng: np.random.Generator):
    G = np.ascontiguousarray(rng.normal(size=(n, n)))
    B = np.ascontiguousarray(rng.normal(size=(n, n)))
    vm = 1 + 0.05 * rng.normal(size=n)
    va = 0.1 * rng.normal(size=n)
    f = rng.integers(0, n, 2 * n).astype(np.int64)
    t = rng.integers(0, n, 2 * n).astype(np.int64)
    return G, B, vm, va, f, t


def bench(sizes, repeat: int) -> list[tuple[str, int, str, float]]:
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        G, B, vm, va, f, t = _system(n, rng)
        on_e = np.ones(len(f), dtype=bool)
        on_n = np.ones(n, dtype=bool)
        for name in kernels.available_backends():
            k = kernels.get_backend(name)
            calls = {
                "injections": lambda: k.injections(G, B, vm, va),
                "jacobian": lambda: k.jacobian(G, B, vm, va),
                "components": lambda: k.components(n, f, t, on_e, on_n),
            }
            for kernel, fn in calls.items():
                number = 20
                best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
                rows.append((kernel, n, name, best))
    return rows


def bench_solve(repeat: int) -> dict[str, float]:
    out = {}
    for name in kernels.available_backends():
        env = dict(os.environ, RASSWITCH_KERNELS=name)
        res = subprocess.run([sys.executable, "-c", SOLVE.format(r=repeat)], env=env,
                             capture_output=True, text=True, check=True)
        out[name] = float(res.stdout.strip())
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[39, 118, 300])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"backends: {', '.join(kernels.available_backends())}")
    rows = bench(args.sizes, args.repeat)
    table = {(k, n, b): s for k, n, b, s in rows}
    print(f"{'kernel':<12}{'n':>6}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for kernel in ("injections", "jacobian", "components"):
        for n in args.sizes:
            py = table[(kernel, n, "python")]
            cy = table.get((kernel, n, "cython"))
            cy_s = f"{cy * 1e3:12.3f}{py / cy:10.1f}x" if cy else f"{'-':>12}{'-':>10}"
            print(f"{kernel:<12}{n:>6}{py * 1e3:12.3f}{cy_s}")
    solve = bench_solve(args.repeat)
    print("IEEE-39 full solve: " + ", ".join(f"{b} {s * 1e3:.2f} ms" for b, s in solve.items()))


if __name__ == "__main__":
    main()
