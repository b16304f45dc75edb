"""Compare the numba and pure-numpy kernels on realistic inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--events 1000000]

Each kernel is run once to warm up (and trigger JIT compilation), then timed
``--repeat`` times; the best time is reported.  Outputs of both flavours are
checked for equality before timing.  An end-to-end ``estimate`` timing under
each backend is run in a subprocess since the backend is fixed at import.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from eeppr import kernels
from eeppr._accel import DISABLE_ENV, HAVE_NUMBA
from eeppr.core import _runs
from eeppr.events import quantize
from eeppr.synth import SynthSpec, generate


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.allclose(a, b)


def kernel_cases(n_events, seed):
    spec = SynthSpec("rotating_dot", 20.0, width=320, height=240, radius=80, dot_radius=20, seed=seed)
    stream = generate(spec)
    rng = np.random.default_rng(seed)
    if len(stream) > n_events:
        keep = np.sort(rng.choice(len(stream), n_events, replace=False))
    else:
        keep = np.arange(len(stream))
    t = stream.t[keep]
    pix = stream.x[keep].astype(np.int64) * stream.height + stream.y[keep]
    pol = stream.p[keep]
    depth = -(-stream.duration_us // 100)
    cases = {"quantize": (pix, t, pol, 100, depth)}

    grid = quantize(stream, 100)
    # one 45x45 window worth of cells around the dot path
    sel = (grid.x >= 120) & (grid.x < 165) & (grid.y >= 30) & (grid.y < 75)
    lp = (grid.x[sel].astype(np.int64) - 120) * 45 + (grid.y[sel] - 30)
    starts, ends = _runs(lp)
    d = depth // 8
    cases["sparse_corr"] = (starts, ends, grid.k[sel].astype(np.int64), grid.value[sel].astype(np.int64), d,
                            depth - d + 1)

    key = np.sort(rng.integers(0, 20000, n_events))
    tt = rng.integers(0, 1_000_000, n_events)
    cases["group_median"] = (key, tt)
    return cases


PAIRS = {
    "quantize": (kernels.quantize_cells_numba, kernels.quantize_cells_numpy),
    "sparse_corr": (kernels.sparse_time_correlation_numba, kernels.sparse_time_correlation_numpy),
    "group_median": (kernels.group_lower_median_deltas_numba, kernels.group_lower_median_deltas_numpy),
}

E2E_SNIPPET = """
import time
from eeppr import BACKEND, estimate, generate, SynthSpec
s = generate(SynthSpec("rotating_dot", 20.0, width=320, height=240, radius=80, dot_radius=20))
estimate(s)
t0 = time.perf_counter(); r = estimate(s); dt = time.perf_counter() - t0
print(BACKEND, len(s), round(r.rate_hz, 4), dt)
"""


def end_to_end():
    rows = []
    for disable in ("0", "1"):
        env = dict(os.environ, **{DISABLE_ENV: disable})
        out = subprocess.run([sys.executable, "-c", E2E_SNIPPET], env=env, capture_output=True, text=True, check=True)
        backend, n, rate, dt = out.stdout.split()
        rows.append((backend, int(n), float(rate), float(dt)))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--events", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    print(f"{'kernel':<14} {'numba s':>10} {'numpy s':>10} {'speedup':>8}  equal")
    for name, case in kernel_cases(args.events, args.seed).items():
        fast, slow = PAIRS[name]
        ok = same(fast(*case), slow(*case))
        tf = best_of(fast, case, args.repeat)
        ts = best_of(slow, case, args.repeat)
        print(f"{name:<14} {tf:>10.4f} {ts:>10.4f} {ts / tf:>7.1f}x  {ok}")

    if not args.skip_e2e:
        print()
        print(f"{'backend':<8} {'events':>9} {'rate Hz':>9} {'estimate s':>11}")
        for backend, n, rate, dt in end_to_end():
            print(f"{backend:<8} {n:>9} {rate:>9.4f} {dt:>11.3f}")


if __name__ == "__main__":
    main()
