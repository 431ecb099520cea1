"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--draws 500] [--steps 40] [--grid 50] [--repeat 3]

Both variants are called directly, so the CLIMGP_NO_NUMBA flag does not
matter here. The first numba call (compilation) is excluded.
"""
import argparse
import time

import numpy as np

from climgp import kernels
from climgp._accel import HAVE_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def make_inputs(M, L, n, K, seed=0):
    rng = np.random.default_rng(seed)
    Z = np.column_stack([rng.random(n)] + [rng.uniform(1, 4, n) for _ in range(K)])
    R = rng.uniform(0.5, 2.0, (M, K + 1))
    uni = dict(
        Beta=rng.normal(0, 0.2, (M, 3)) + [0.5, 0.1, 0.7],
        Dv=rng.normal(2.5, 0.2, (M, n)),
        s2f=rng.uniform(1e-3, 1e-2, M),
        s2e=rng.uniform(1e-4, 1e-3, M),
    )
    A = rng.normal(size=(M, K, K))
    mv = dict(
        B=rng.normal(0, 0.2, (M, K + 2, K)),
        D=rng.normal(2.5, 0.2, (M, n, K)),
        Sf=0.01 * (A @ A.transpose(0, 2, 1) + K * np.eye(K)),
        Se=np.tile(1e-3 * np.eye(K), (M, 1, 1)),
    )
    t = np.arange(1, L + 1) / (L + 1)
    return rng, Z, R, uni, mv, t


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", type=int, default=500)
    ap.add_argument("--steps", type=int, default=40)
    ap.add_argument("--grid", type=int, default=50)
    ap.add_argument("--dims", type=int, default=3, help="K for the multivariate kernel")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    M, L, n, K = args.draws, args.steps, args.grid, args.dims
    rng, Z, R, u, m, t = make_inputs(M, L, n, K)
    Z1, R1 = Z[:, :2], R[:, :2]
    noise = rng.standard_normal((M, L))
    noise_mv = rng.standard_normal((M, L, K))
    x = rng.uniform(2, 3, L + 1)
    log_m = rng.normal(0, 2, 5)
    g = rng.gamma(1.0, size=(100_000, 5))
    e = rng.standard_exponential(100_000)
    uu = rng.random(100_000)

    cases = {
        "simulate_paths": lambda v: getattr(kernels, f"simulate_paths_{v}")(
            2.5, t, Z1, R1, u["Beta"], u["Dv"], u["s2f"], u["s2e"], noise, nugget=1e-7),
        "path_loglik_batch": lambda v: getattr(kernels, f"path_loglik_batch_{v}")(
            x[:-1], x[1:], t, Z1, R1, u["Beta"], u["Dv"], u["s2f"], u["s2e"], nugget=1e-7),
        "simulate_mv_paths": lambda v: getattr(kernels, f"simulate_mv_paths_{v}")(
            np.full(K, 2.5), t, Z, R, m["B"], m["D"], m["Sf"], m["Se"], noise_mv, nugget=1e-7),
        "gibbs_zeta_p_loop": lambda v: getattr(kernels, f"gibbs_zeta_p_loop_{v}")(log_m, g, e, uu),
    }
    print(f"M={M} draws, L={L} steps, n={n} grid points, K={K}; best of {args.repeat}")
    print(f"{'kernel':<20}{'numpy [s]':>12}{'numba [s]':>12}{'speed-up':>10}")
    for name, call in cases.items():
        call("numba")  # compile
        t_np = best_of(lambda: call("numpy"), args.repeat)
        t_nb = best_of(lambda: call("numba"), args.repeat)
        print(f"{name:<20}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
