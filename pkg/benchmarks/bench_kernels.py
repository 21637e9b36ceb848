"""Compare the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N]

Kernel timings call both implementations directly in one process. The end-to-end
row runs a retail SDI evaluation in a subprocess per backend, selected with
NAVPOLICY_NUMBA, and checks that both give the same score.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from navpolicy import _kernels as K

E2E = (
    "import time; from navpolicy import *; "
    "sc = load_bundled('retail'); cfg = SimConfig.from_scenario(sc, seed=0); "
    "evaluate_sdi(sc, None, SimConfig.from_scenario(sc, seed=0, duration=1.0), SdiParams()); "
    "t = time.perf_counter(); s = evaluate_sdi(sc, None, cfg, SdiParams()).sdi; "
    "print(time.perf_counter() - t, repr(s))"
)


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def cases(rng):
    cx, cy = rng.uniform(0, 50, (2, 2500))
    ax, ay = rng.uniform(0, 50, (2, 100))
    counts = rng.integers(10, 30, 300)
    off = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    sx, sy = rng.uniform(0, 20, (2, int(off[-1])))
    gx, gy = np.ascontiguousarray(cx[:400] * 0.4), np.ascontiguousarray(cy[:400] * 0.4)
    nx, ny = rng.uniform(-1.5, 1.5, (2, 6))
    nvx, nvy = rng.uniform(-1.4, 1.4, (2, 6))
    return {
        "score_cells 2500x100": (
            lambda f: f(cx, cy, ax, ay, 0.3, 1000.0), K.score_cells_numpy, K.score_cells_numba, 20),
        "score_series 400x300 frames": (
            lambda f: f(gx, gy, off, sx, sy, 0.3, 1000.0, 1.0, False), K.score_series_numpy,
            K.score_series_numba, 3),
        "steer 6 neighbours": (
            lambda f: f(0.0, 0.0, 3.0, 1.0, 1.4, 0.3, 0.1, nx, ny, nvx, nvy), K.steer_numpy, K.steer_numba, 2000),
    }


def end_to_end(flag):
    env = dict(os.environ, NAVPOLICY_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
    t, s = out.stdout.split()
    return float(t), float(s)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not K.HAS_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    print(f"{'kernel':32s} {'numpy':>12s} {'numba':>12s} {'speedup':>8s}")
    for name, (call, f_np, f_nb, number) in cases(np.random.default_rng(0)).items():
        call(f_nb)  # compile outside the timed region
        t_np = best_of(lambda: call(f_np), args.repeat, number)
        t_nb = best_of(lambda: call(f_nb), args.repeat, number)
        print(f"{name:32s} {t_np * 1e3:10.3f}ms {t_nb * 1e3:10.3f}ms {t_np / t_nb:7.1f}x")
    t_nb, s_nb = end_to_end("1")
    t_np, s_np = end_to_end("0")
    print(f"{'retail SDI evaluation (30 s)':32s} {t_np:11.2f}s {t_nb:11.2f}s {t_np / t_nb:7.1f}x")
    print(f"SDI numpy={s_np!r} numba={s_nb!r} rel diff={abs(s_np - s_nb) / abs(s_nb):.1e}")


if __name__ == "__main__":
    main()
