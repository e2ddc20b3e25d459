"""Time the hot solver loops with numba and with the pure-numpy fallback.

Each backend runs in its own interpreter because the backend is chosen at
import time from ``ASYNCACT_DISABLE_NUMBA``.

Usage::

    python benchmarks/bench_kernels.py [--repeats 3] [--seed 0]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, sys, time
from asyncact import SystemConfig, simulate_trial
from asyncact._kernels import NUMBA_ENABLED
from asyncact.baselines import bcd_solve
from asyncact.centralized import alg1_solve
from asyncact.distributed import alg2_solve, DistributedOptions

repeats, seed = int(sys.argv[1]), int(sys.argv[2])
cfg = SystemConfig(num_aps=4, antennas_per_ap=4, num_devices=50, sig_len=9, max_delay=1)
_, d = simulate_trial(cfg, seed)
cases = {
    "alg1_solve": lambda: alg1_solve(d),
    "alg2_solve (10 it)": lambda: alg2_solve(d, DistributedOptions(max_iters=10)),
    "bcd_solve": lambda: bcd_solve(d),
}
out = {"numba": NUMBA_ENABLED}
for name, fn in cases.items():
    fn()  # warm-up, includes JIT compilation
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps(out))
"""


def run_backend(disable: bool, repeats: int, seed: int) -> dict:
    env = dict(os.environ, ASYNCACT_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", _WORKER, str(repeats), str(seed)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    fast = run_backend(False, args.repeats, args.seed)
    slow = run_backend(True, args.repeats, args.seed)
    if not fast.pop("numba"):
        print("warning: numba unavailable, both columns use the fallback")
    slow.pop("numba")
    print(f"{'kernel':<22}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, t in fast.items():
        print(f"{name:<22}{t:>12.4f}{slow[name]:>12.4f}{slow[name] / t:>9.1f}x")


if __name__ == "__main__":
    main()
