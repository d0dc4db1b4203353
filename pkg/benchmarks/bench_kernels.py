"""Compare the numba kernel path against the pure-numpy fallback.

Usage:
    python3 benchmarks/bench_kernels.py           # run both modes, print a table
    python3 benchmarks/bench_kernels.py --mode numpy
    python3 benchmarks/bench_kernels.py --mode numba

The kernel path is chosen at import time from GEOLAB_DISABLE_NUMBA, so the
default invocation runs each mode in its own subprocess.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def bench(fn, *args, repeats=20, warmup=3):
    for _ in range(warmup):
        fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def run_mode():
    from geolab.kernels import (
        USING_NUMBA,
        adam_update,
        bilinear_sample,
        col2im3x3,
        im2col3x3,
    )

    rng = np.random.default_rng(0)
    x = rng.normal(size=(32, 128, 8, 8)).astype(np.float32)
    cols = im2col3x3(x)
    img = rng.random((512, 512))
    yy, xx = np.mgrid[0:400, 0:400] * 1.27
    n = 1_000_000
    p = rng.normal(size=n)
    g = rng.normal(size=n)
    m = np.zeros(n)
    v = np.zeros(n)

    results = {
        "mode": "numba" if USING_NUMBA else "numpy",
        "im2col3x3 (32,128,8,8)": bench(im2col3x3, x),
        "col2im3x3 (32,128,8,8)": bench(col2im3x3, cols, 32, 128, 8, 8),
        "bilinear_sample 400x400 of 512x512": bench(bilinear_sample, img, xx, yy),
        "adam_update 1e6 params": bench(
            adam_update, p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 1),
    }
    return results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mode", choices=["numpy", "numba", "both"], default="both")
    ap.add_argument("--json", action="store_true", help="emit machine-readable output")
    args = ap.parse_args()

    if args.mode != "both":
        os.environ["GEOLAB_DISABLE_NUMBA"] = "1" if args.mode == "numpy" else "0"
        res = run_mode()
        if args.json:
            print(json.dumps(res))
        else:
            print(f"kernel path: {res.pop('mode')}")
            for name, sec in res.items():
                print(f"  {name:42s} {sec * 1e3:9.3f} ms")
        return

    rows = {}
    for mode in ("numpy", "numba"):
        env = dict(os.environ, GEOLAB_DISABLE_NUMBA="1" if mode == "numpy" else "0")
        out = subprocess.run([sys.executable, __file__, "--mode", mode, "--json"],
                             capture_output=True, text=True, env=env, check=True)
        rows[mode] = json.loads(out.stdout.strip().splitlines()[-1])

    names = [k for k in rows["numpy"] if k != "mode"]
    width = max(len(n) for n in names)
    print(f"{'kernel':{width}s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for name in names:
        a, b = rows["numpy"][name], rows["numba"][name]
        print(f"{name:{width}s} {a * 1e3:10.3f}ms {b * 1e3:10.3f}ms {a / b:8.2f}x")


if __name__ == "__main__":
    main()
