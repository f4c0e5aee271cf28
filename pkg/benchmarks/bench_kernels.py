#!/usr/bin/env python
"""Numba kernels vs the pure-numpy fallback.

The backend is fixed at import time, so each backend runs in its own
subprocess with ``URLLC_LAB_DISABLE_JIT`` set accordingly.  Besides the
timings, the script checks that both backends produce the same numbers.

    python benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from urllc_lab import _accel, _kernels
from urllc_lab.age import AgePolicy
from urllc_lab.channel import ChannelSpec, draw_products
from urllc_lab.mc import substream

repeat = int(sys.argv[1])


def timed(fn):
    fn()  # warm-up (compilation for numba)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


rng = substream(0, 9, 0)
xy = draw_products(ChannelSpec(1.0, 100), rng, (8192, 100))
alphas = np.array([0.25 * i for i in range(1, 9)])
t_dens, dens = timed(lambda: _kernels.grouped_info_density(xy, alphas, 100))

gaps = rng.geometric(0.05, size=1_000_000).astype(np.int64)
svc = rng.geometric(0.5, size=1_000_000).astype(np.int64) * 5
t_lind, delays = timed(lambda: _kernels.lindley_delays(gaps, svc))

a = rng.random(400)
b = np.concatenate([[1.0], -0.5 * rng.random(399) / 400])
t_rec, tail = timed(lambda: _kernels.ccdf_recursion(a, b, 20_000))

u = substream(0, 9, 1).random((2, 200_000))


def age_run():
    state = np.zeros(_kernels.N_STATE, dtype=np.int64)
    state[6] = -1
    hist = np.zeros(4096, dtype=np.int64)
    _kernels.age_chunk(AgePolicy.KTL.code, u[0], u[1], 0.3, np.array([0.7]), state, hist, 1, 10**9)
    return hist


t_age, hist = timed(age_run)
json.dump(
    {
        "backend": _accel.backend(),
        "seconds": {"info_density": t_dens, "lindley": t_lind, "ccdf_recursion": t_rec, "age_chunk": t_age},
        "check": {
            "info_density": float(dens.sum()),
            "lindley": int(delays.sum()),
            "ccdf_recursion": float(np.nansum(tail)),
            "age_chunk": int((hist * np.arange(hist.size)).sum()),
        },
    },
    sys.stdout,
)
"""


def run_backend(disable_jit, repeat):
    env = dict(os.environ)
    env["URLLC_LAB_DISABLE_JIT"] = "1" if disable_jit else "0"
    out = subprocess.run(
        [sys.executable, "-c", WORKER, str(repeat)], env=env, check=True, capture_output=True, text=True
    )
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    t0 = time.perf_counter()
    fast = run_backend(False, args.repeat)
    slow = run_backend(True, args.repeat)
    print("%-16s %12s %12s %9s  %s" % ("kernel", "numba [s]", "numpy [s]", "speedup", "agree"))
    for name, t_fast in fast["seconds"].items():
        t_slow = slow["seconds"][name]
        c1, c2 = fast["check"][name], slow["check"][name]
        agree = abs(c1 - c2) <= 1e-9 * max(1.0, abs(c1))
        print("%-16s %12.4f %12.4f %8.1fx  %s" % (name, t_fast, t_slow, t_slow / t_fast, "yes" if agree else "NO"))
    print("backends: %s vs %s, total %.1f s" % (fast["backend"], slow["backend"], time.perf_counter() - t0))


if __name__ == "__main__":
    main()
