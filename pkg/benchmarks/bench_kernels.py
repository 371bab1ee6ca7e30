"""Numba vs numpy timing of the hot kernels and of one full replication.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--vehicles 2000]

Kernel timings run in-process against both implementations. The end-to-end
replication is run twice in subprocesses, once with FBRSIM_DISABLE_NUMBA=1,
so that the module-level backend switch is exercised as users would.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fbrsim import _kernels as K


def _best(fn, repeat):
    fn()  # warm-up (JIT compile / caches)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(n, repeat):
    rng = np.random.default_rng(0)
    L = 10_000.0
    xs = np.sort(rng.uniform(0, L, n))
    v, v0 = rng.uniform(0, 35, n), rng.uniform(25, 35, n)
    gap, dv = rng.uniform(2, 200, n), rng.normal(0, 3, n)
    a, b = K.forward_pairs_numpy(xs, L, 250.0)
    cols = rng.integers(0, 10, a.size)
    w = rng.integers(0, 11, a.size)

    cases = {
        "forward_pairs": (lambda: K.forward_pairs_numpy(xs, L, 250.0),
                          lambda: K.forward_pairs_numba(xs, L, 250.0)),
        "idm_accel": (lambda: K.idm_accel_numpy(v, v0, gap, dv, 1.0, 1.5, 2.0, 1.5),
                      lambda: K.idm_accel_numba(v, v0, gap, dv, 1.0, 1.5, 2.0, 1.5)),
        "tally": (lambda: K.tally_numpy(a, cols, w, n, 10),
                  lambda: K.tally_numba(a, cols, w, n, 10)),
    }
    print(f"kernels, n={n} vehicles, {a.size} candidate pairs, best of {repeat}")
    print(f"{'kernel':<16}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, (f_np, f_nb) in cases.items():
        t_np = _best(f_np, repeat)
        t_nb = _best(f_nb, repeat) if K.HAVE_NUMBA else float("nan")
        print(f"{name:<16}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>10.2f}")


REPLICATION = """
import time
from fbrsim import _kernels
from fbrsim.domain import ScenarioConfig, fredy
from fbrsim.engine import run_replication
cfg = ScenarioConfig(vehicle_count={n}, sim_duration=30, strategy=fredy(0, 150))
run_replication(cfg.replace(sim_duration=2), 0)
t0 = time.perf_counter()
r = run_replication(cfg, 1)
print(_kernels.BACKEND, time.perf_counter() - t0, r.summary.median_br)
"""


def replication_table(n):
    print(f"\nend-to-end replication, {n} vehicles, 30 windows, 10 km road")
    rows = []
    for flag in ("0", "1"):
        env = dict(os.environ, FBRSIM_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", REPLICATION.format(n=n)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        rows.append((out[0], float(out[1]), out[2]))
        print(f"{out[0]:<8}{float(out[1]):>8.2f} s   median br {out[2]}")
    if rows[0][2] != rows[1][2]:
        print("warning: backends disagree")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--vehicles", type=int, default=2000)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        print("numba unavailable or disabled; only numpy timings are meaningful")
    kernel_table(args.vehicles, args.repeat)
    replication_table(args.vehicles)


if __name__ == "__main__":
    main()
