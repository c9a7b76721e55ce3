"""Time the compiled and numpy conv3d backends on the same inputs.

    python3 benchmarks/bench_kernels.py [--size 32] [--cin 12] [--cout 4] [--repeat 5]
"""
import argparse
import time

import numpy as np

from smallseg.nn import _npkernels

try:
    from smallseg.nn import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--cin", type=int, default=12)
    ap.add_argument("--cout", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = {"numpy": _npkernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled extension not built; timing numpy only")

    rng = np.random.default_rng(0)
    n = args.size
    print(f"conv3d 3x3x3, {args.cin}->{args.cout} channels, {n}^3 grid, best of {args.repeat}")
    print(f"{'dtype':8s}{'backend':9s}{'forward ms':>12s}{'backward ms':>13s}{'max |diff|':>12s}")
    for dtype in (np.float32, np.float64):
        x = rng.standard_normal((args.cin, n, n, n)).astype(dtype)
        w = (rng.standard_normal((args.cout, args.cin, 3, 3, 3)) * 0.1).astype(dtype)
        b = rng.standard_normal(args.cout).astype(dtype)
        dout = rng.standard_normal((args.cout, n, n, n)).astype(dtype)
        ref = _npkernels.conv3d_forward(x, w, b)
        for name, mod in backends.items():
            fwd = best_of(lambda: mod.conv3d_forward(x, w, b), args.repeat)
            bwd = best_of(lambda: mod.conv3d_backward(dout, x, w), args.repeat)
            diff = float(np.max(np.abs(mod.conv3d_forward(x, w, b) - ref)))
            print(f"{np.dtype(dtype).name:8s}{name:9s}{fwd * 1e3:12.2f}{bwd * 1e3:13.2f}{diff:12.2e}")


if __name__ == "__main__":
    main()
