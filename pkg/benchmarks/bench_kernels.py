"""Compare the compiled kernels against the pure-Python fallback.

Each backend runs in its own interpreter because ``FCMAC_NO_NUMBA`` is read
at import time::

    python benchmarks/bench_kernels.py [--sim-time 0.2] [--gae-steps 20000]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def measure(sim_time: float, gae_steps: int, repeats: int) -> dict:
    import numpy as np

    from fcmac._jit import NUMBA_ENABLED
    from fcmac.mappo.gae import compute_gae
    from fcmac.sim import SimConfig, run

    cfg = SimConfig(n_stations=10, sim_time=sim_time, warmup=0.0)
    run(cfg, seed=0)  # warm-up: compile or load the cache
    compute_gae(np.zeros(4), np.zeros(5), 0.98, 0.95)

    best_sim = best_gae = float("inf")
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=gae_steps), rng.normal(size=gae_steps + 1)
    for _ in range(repeats):
        t = time.perf_counter()
        trace = run(cfg, seed=1)
        best_sim = min(best_sim, time.perf_counter() - t)
        t = time.perf_counter()
        compute_gae(r, v, 0.98, 0.95)
        best_gae = min(best_gae, time.perf_counter() - t)
    return dict(numba=NUMBA_ENABLED, sim_seconds=best_sim, attempts=int(trace.tx_attempts.sum()),
                gae_seconds=best_gae)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sim-time", type=float, default=0.2, help="simulated seconds per run (n=10)")
    ap.add_argument("--gae-steps", type=int, default=20000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(measure(args.sim_time, args.gae_steps, args.repeats)))
        return

    results = {}
    for flag in ("0", "1"):
        env = dict(os.environ, FCMAC_NO_NUMBA=flag)
        out = subprocess.run([sys.executable, __file__, "--child", "--sim-time", str(args.sim_time),
                              "--gae-steps", str(args.gae_steps), "--repeats", str(args.repeats)],
                             env=env, check=True, capture_output=True, text=True).stdout
        results["numba" if flag == "0" else "python"] = json.loads(out.strip().splitlines()[-1])

    nb, py = results["numba"], results["python"]
    if not nb["numba"]:
        print("numba is not installed; both runs used the fallback")
    print(f"{'kernel':<28}{'numba':>12}{'python':>12}{'speedup':>10}")
    print(f"{'simulator (n=10, %.2f s)' % args.sim_time:<28}{nb['sim_seconds']:>11.4f}s{py['sim_seconds']:>11.4f}s"
          f"{py['sim_seconds'] / nb['sim_seconds']:>9.1f}x")
    print(f"{'GAE (%d steps)' % args.gae_steps:<28}{nb['gae_seconds']:>11.5f}s{py['gae_seconds']:>11.5f}s"
          f"{py['gae_seconds'] / nb['gae_seconds']:>9.1f}x")
    if nb["attempts"] != py["attempts"]:
        sys.exit("backends disagree on the simulated trace")


if __name__ == "__main__":
    main()
