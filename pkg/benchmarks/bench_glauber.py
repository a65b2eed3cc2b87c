"""Glauber kernel throughput: numba versus the pure-Python fallback.

Each backend runs in its own interpreter because the choice is made at
import time from ``TRITAIL_DISABLE_JIT``.

    python3 benchmarks/bench_glauber.py --n 32 --steps 2000000 --py-steps 200000
"""

import argparse
import json
import os
import subprocess
import sys

SNIPPET = """
import json, sys, time
from tritail import _kernels as K
from tritail.glauber import run_chain
from tritail.rates import ProblemSpec, TiltParams
n, steps = int(sys.argv[1]), int(sys.argv[2])
spec = ProblemSpec(0.35, 0.4)
tilt = TiltParams.triangle(spec, 1.0)
run_chain(tilt, n, 1000, 0, seed=0, spec=spec)  # compile / warm up
t0 = time.perf_counter()
run_chain(tilt, n, steps, 0, seed=1, spec=spec)
dt = time.perf_counter() - t0
print(json.dumps({"backend": K.BACKEND, "n": n, "steps": steps, "seconds": dt, "steps_per_s": steps / dt}))
"""


def measure(n: int, steps: int, disable: bool) -> dict:
    env = dict(os.environ, TRITAIL_DISABLE_JIT="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", SNIPPET, str(n), str(steps)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--steps", type=int, default=2_000_000, help="steps for the numba backend")
    ap.add_argument("--py-steps", type=int, default=200_000, help="steps for the Python fallback")
    args = ap.parse_args()
    jit = measure(args.n, args.steps, disable=False)
    py = measure(args.n, args.py_steps, disable=True)
    for r in (jit, py):
        print(f"{r['backend']:>6}: {r['steps_per_s']:,.0f} steps/s  ({r['steps']:,} steps in {r['seconds']:.2f} s)")
    if jit["backend"] == "numba":
        print(f"speedup: {jit['steps_per_s'] / py['steps_per_s']:.0f}x")


if __name__ == "__main__":
    main()
