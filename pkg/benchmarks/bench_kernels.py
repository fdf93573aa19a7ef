"""Compare the compiled and numpy kernel backends, then time a full step.

    python benchmarks/bench_kernels.py [--n 32] [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from bfdarcy import kernels
from bfdarcy.dynamics import PhysicsParams, StepperConfig, step
from bfdarcy.spectral import make_grid, random_divergence_free


def _cases(n, rng):
    u = rng.standard_normal((3, n, n, n))
    f = rng.standard_normal((3, n, n, n))
    m2 = np.sum(u * u, axis=0)
    U = rng.standard_normal((n**3, 3))
    V = rng.standard_normal((n**3, 3))
    return {
        "squared_magnitude": (u,),
        "damping_force": (u, 1.0, 1.5),
        "exact_damping": (u, 1.0, 1.5, 1e-3),
        "power_sum": (u, 5.0),
        "weighted_square_sum": (m2, f, 1.5),
        "monotonicity_scan": (U, V, 1.5),
    }


def best_of(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=32)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    backends = ["python"] + (["cython"] if kernels.COMPILED_AVAILABLE else [])
    print(f"grid {args.n}^3, best of {args.repeat}; active backend: {kernels.BACKEND}")
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, call_args in _cases(args.n, rng).items():
        times = [best_of(getattr(kernels.get_backend(b), name), call_args, args.repeat) for b in backends]
        speedup = f"{times[0] / times[1]:9.1f}x" if len(times) == 2 else ""
        print(f"{name:<22}" + "".join(f"{t * 1e3:10.3f}ms" for t in times) + speedup)

    grid = make_grid(args.n, args.n)
    u = random_divergence_free(grid, seed=0, energy=grid.volume)
    params = PhysicsParams(nu=0.05, a=1.0, alpha=1.5)
    for scheme in ("imex_rk2", "imex_rk3"):
        for mode in ("explicit", "exact_split"):
            cfg = StepperConfig(dt=1e-3, scheme=scheme, damping_mode=mode)
            t = best_of(step, (u, params, cfg), max(3, args.repeat // 4))
            print(f"step {scheme:<9} {mode:<12} {t * 1e3:8.2f} ms")


if __name__ == "__main__":
    main()
