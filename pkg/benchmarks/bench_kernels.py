"""Benchmark the compiled MLP kernel against the pure-numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Times the fused loss-and-gradients call (the hot loop of every experiment)
across batch sizes, for both backends, and verifies they agree numerically.
"""

import time

import numpy as np

from flocosim.kernels import _python

try:
    from flocosim.kernels import _core
except ImportError:
    _core = None


def make_case(rng, batch, d=16, h=32, l=10):
    return (
        rng.standard_normal((h, d)),
        rng.standard_normal(h),
        rng.standard_normal((l, h)),
        rng.standard_normal(l),
        rng.standard_normal((batch, d)),
        rng.integers(0, l, size=batch),
    )


def time_backend(fn, case, repeats=2000):
    fn(*case)  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*case)
    return (time.perf_counter() - start) / repeats


def main():
    rng = np.random.default_rng(0)
    print(f"{'batch':>6} {'python':>12} {'compiled':>12} {'speedup':>8}")
    for batch in (8, 32, 128, 512):
        case = make_case(rng, batch)
        t_py = time_backend(_python.mlp_loss_and_grads, case)
        if _core is None:
            print(f"{batch:>6} {t_py * 1e6:>10.1f}us {'n/a':>12} {'n/a':>8}")
            continue
        t_c = time_backend(_core.mlp_loss_and_grads, case)
        ref = _python.mlp_loss_and_grads(*case)
        got = _core.mlp_loss_and_grads(*case)
        assert abs(ref[0] - got[0]) < 1e-12
        for a, b in zip(ref[1:], got[1:]):
            assert np.allclose(a, b, atol=1e-13)
        print(f"{batch:>6} {t_py * 1e6:>10.1f}us {t_c * 1e6:>10.1f}us {t_py / t_c:>7.2f}x")
    if _core is None:
        print("compiled extension not built; install with: pip install -e . --no-build-isolation")


if __name__ == "__main__":
    main()
