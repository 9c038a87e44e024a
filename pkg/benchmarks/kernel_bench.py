#!/usr/bin/env python3
"""Time the hot kernels under both backends and print a comparison table.

Run as ``python benchmarks/kernel_bench.py``: the script re-executes itself
once per backend (via the LEVICOOL_BACKEND environment flag, which is read
at import time) and merges the timings.  ``--backend numba|numpy`` times a
single backend in-process instead.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def run_suite():
    from levicool import _kernels

    rng = np.random.default_rng(1)
    a = np.array([[-0.25, 0.5, 0.0, 0.0], [-0.5, -0.25, -0.2, 0.0],
                  [0.0, 0.0, 0.0, 1.0], [-0.2, 0.0, -1.0, 0.0]])
    d = np.diag([0.25, 0.25, 0.0, 0.0])
    v0 = 0.5 * np.eye(4)
    m0 = np.zeros(4)

    eps = rng.normal(0.0, 0.05, size=(400, 20_000))
    x0 = np.ones(400)
    zeros = np.zeros(400)

    m = np.eye(4) + 1e-3 * a
    chol = np.linalg.cholesky(d + 1e-6 * np.eye(4))
    xi = rng.standard_normal((400, 5_000, 4))
    x04 = rng.standard_normal((400, 4))

    cases = [
        ("rk4_lyapunov (4x4, 200k steps)",
         lambda: _kernels.rk4_lyapunov(a, d, v0, m0, 1e-4, 200_000, 1000)),
        ("param_heating (400 runs x 20k steps)",
         lambda: _kernels.param_heating_ensemble(2.0, eps, x0, zeros,
                                                 1e-3, 200)),
        ("linear_sde (400 runs x 5k steps)",
         lambda: _kernels.linear_sde_trajectories(m, chol, x04, xi,
                                                  1e-3, 50)),
    ]
    rows = []
    for label, fn in cases:
        fn()  # warm-up / JIT compile outside the timed region
        best = min(_time(fn) for _ in range(5))
        rows.append((label, best))
    return _kernels.active_backend(), rows


def _time(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--backend", choices=["numba", "numpy"],
                        help="time one backend in-process and emit JSON")
    args = parser.parse_args()

    if args.backend:
        backend, rows = run_suite()
        if backend != args.backend:
            raise SystemExit(f"requested {args.backend} but got {backend}; "
                             "is numba importable?")
        print(json.dumps({"backend": backend, "rows": rows}))
        return

    results = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, LEVICOOL_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, __file__, "--backend", backend],
            env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"{backend}: unavailable ({proc.stderr.strip()})")
            continue
        doc = json.loads(proc.stdout.splitlines()[-1])
        results[backend] = dict((label, secs) for label, secs in doc["rows"])

    if not results:
        raise SystemExit("no backend produced timings")
    labels = list(next(iter(results.values())))
    width = max(len(l) for l in labels)
    header = f"{'kernel':<{width}}  " + "".join(f"{b:>12}" for b in results)
    if len(results) == 2:
        header += f"{'speed-up':>12}"
    print(header)
    print("-" * len(header))
    for label in labels:
        line = f"{label:<{width}}  "
        for backend in results:
            line += f"{results[backend][label] * 1e3:>10.2f}ms"
        if len(results) == 2:
            ratio = results["numpy"][label] / results["numba"][label]
            line += f"{ratio:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
