"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat N] [--size PX]

Both backends are checked for identical output before timing.  The first
numba call (compilation, or cache load) is excluded.
"""

import argparse
import time

import numpy as np

from oculolipid import _accel, kernels
from oculolipid.morphometry import box_ladder
from oculolipid.synthetic import synthetic_mask


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(size):
    m = synthetic_mask(1, size=size)
    vessels = m.artery | m.vein
    sizes = box_ladder(vessels.shape)
    rng = np.random.default_rng(0)
    a = rng.normal(size=(7000, 18))
    b = rng.normal(size=(7000, 187))
    return {
        f"thin ({size}x{size} vessel mask)": (kernels.thin, (vessels,)),
        f"box_counts ({size}x{size}, {len(sizes)} sizes)": (kernels.box_counts, (vessels, sizes)),
        "pair_dots (7000 x 18 x 187)": (kernels.pair_dots, (a, b)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=512)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy backend can be timed")
    print(f"{'kernel':<40} {'numpy s':>10} {'numba s':>10} {'speedup':>8}")
    for name, (fn, fargs) in cases(args.size).items():
        _accel.USE_NUMBA = False
        ref = fn(*fargs)
        t_np = best_of(lambda: fn(*fargs), args.repeat)
        if _accel.HAVE_NUMBA:
            _accel.USE_NUMBA = True
            out = fn(*fargs)
            same = np.allclose(out, ref, rtol=1e-12, atol=1e-12) if out.dtype.kind == "f" else np.array_equal(out, ref)
            if not same:
                raise SystemExit(f"{name}: backends disagree")
            t_nb = best_of(lambda: fn(*fargs), args.repeat)
            print(f"{name:<40} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x")
        else:
            print(f"{name:<40} {t_np:>10.4f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
