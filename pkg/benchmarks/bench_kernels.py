"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so the script needs the extension built.
"""

import argparse
import timeit

import numpy as np

from oempc import _kernels, _pure
from oempc.harness import pipeline
from oempc.harness.config import ExperimentConfig

BACKENDS = {"cython": _kernels, "python": _pure}


def cases(model, params):
    s = model.spec
    rng = np.random.default_rng(0)
    args = model._args()
    Q = model.dataset.Q[rng.integers(0, len(model.dataset), 200)]
    Q = Q + rng.normal(0, 0.01, Q.shape)
    z0 = np.ascontiguousarray(Q[0, : s.n_z])
    U = rng.uniform(0.5, 1.5, (8, 1))
    k1, k2, V, cA0, tau, sub, var = params.kernel_args()
    Ucstr = rng.uniform(0.1, 2.0, 400)
    return {
        "ki_predict_many (200 queries)":
            lambda b: b.ki_predict_many(*args, Q),
        "ki_rollout (N_p = 8)":
            lambda b: b.ki_rollout(*args, z0, U, s.n_a, s.n_b, s.m),
        "cstr_rollout (400 steps)":
            lambda b: b.cstr_rollout(0.5, 0.5, Ucstr, k1, k2, V, cA0, params.alpha,
                                     tau, sub, var),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    cfg = ExperimentConfig()
    model = pipeline.trained_oracle(cfg, 0)
    print(f"oracle: {len(model.dataset)} samples")
    print(f"{'kernel':32s} {'cython [ms]':>12s} {'python [ms]':>12s} {'speed-up':>9s}")
    for name, fn in cases(model, cfg.plant).items():
        t = {}
        for bname, b in BACKENDS.items():
            n = 3 if bname == "python" else 20
            t[bname] = min(timeit.repeat(lambda: fn(b), number=n, repeat=args.repeat)) / n
        print(f"{name:32s} {1e3 * t['cython']:12.3f} {1e3 * t['python']:12.3f} "
              f"{t['python'] / t['cython']:9.1f}x")


if __name__ == "__main__":
    main()
