"""Throughput of the compiled chain engine against the numpy fallback.

    python3 benchmarks/bench_engine.py [--steps N] [--repeat R] [--out results.csv]

Both engines consume identical pre-drawn noise, so the timings isolate the
update loop. Reports chain-steps per second for a few (kernel, chains, dim)
shapes and the speedup of each backend over the fallback.
"""
import argparse
import csv
import sys
import time

import numpy as np

from mpcnkit import engine
from mpcnkit.kernels import _KIND_CODES, MhKernel, _engine_params, draw_noise
from mpcnkit.rng import RngStream
from mpcnkit.targets import Gaussian, StudentLike

CASES = [
    ("mpcn", 1, 2),
    ("mpcn", 50, 2),
    ("mpcn", 1, 50),
    ("rwm", 1, 2),
    ("rwm", 50, 10),
    ("pcn", 16, 20),
]


def _kernel(kind, d):
    if kind == "rwm":
        return MhKernel.rwm(StudentLike(d, d + 4.0), 2.38 / np.sqrt(d))
    if kind == "pcn":
        return MhKernel.pcn(Gaussian(d, 1.5))
    return MhKernel.mpcn(StudentLike(d, d + 4.0))


def time_backend(name, k, m, steps, repeat):
    d = k.dim
    rng = RngStream(0, 0)
    W, S, logu = draw_noise(k.proposal, steps, m, d, rng)
    fam, a, b = _engine_params(k.target)
    tau = k.proposal.scale if k.kind == "rwm" else k.proposal.rho
    adv = engine.get_advance(name)
    best = np.inf
    for _ in range(repeat):
        X = np.ones((m, d))
        lp = np.array([k.target.log_pi(x) for x in X])
        acc = np.zeros(m, np.int64)
        active = np.ones(m, np.uint8)
        hit_at = np.full(m, -1, np.int64)
        t0 = time.perf_counter()
        adv(_KIND_CODES[k.kind], fam, a, b, tau, X, lp, W, S, logu, acc, active, -1.0, 0, hit_at,
            np.zeros((0, m, d)))
        best = min(best, time.perf_counter() - t0)
    return steps * m / best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--out", default=None, help="optional CSV destination")
    args = ap.parse_args(argv)
    backends = engine.available_backends()
    rows = []
    print(f"backends: {', '.join(backends)} (active: {engine.BACKEND})")
    print(f"{'kernel':<6} {'chains':>6} {'dim':>4} " + " ".join(f"{b + ' steps/s':>18}" for b in backends)
          + "  speedup")
    for kind, m, d in CASES:
        k = _kernel(kind, d)
        rates = {b: time_backend(b, k, m, args.steps, args.repeat) for b in backends}
        speed = rates.get("cython", np.nan) / rates["python"]
        print(f"{kind:<6} {m:>6} {d:>4} " + " ".join(f"{rates[b]:>18.3e}" for b in backends) + f"  {speed:7.1f}x")
        rows.append({"kernel": kind, "chains": m, "dim": d, **{f"{b}_steps_per_s": rates[b] for b in backends},
                     "speedup": speed})
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
