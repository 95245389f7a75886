"""Compare the compiled kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-``repeat`` time for each kernel under both backends and
for one end-to-end oracle sampling run (20,000 chains, T = 200).
"""
import argparse
import timeit

import numpy as np

from diffinpaint import _pykernels, build_schedule, kernels, sample_unconditional
from diffinpaint.denoiser import GaussianMixture, equicorrelated_gaussian, make_gmm_oracle

try:
    from diffinpaint import _ckernels
except ImportError:
    _ckernels = None


def gmm_case(n, gmm, seed=0):
    x = np.random.default_rng(seed).standard_normal((n, gmm.dim)) * 2
    with np.errstate(divide="ignore"):
        lw = np.log(gmm.weights)
    return lambda impl: kernels.gmm_posterior_mean(x, 0.7, gmm.means, gmm.stds, lw, impl=impl)


def ddpm_case(n, seed=0):
    rng = np.random.default_rng(seed)
    x, e, z = (rng.standard_normal(n).astype(np.float32) for _ in range(3))
    return lambda impl: kernels.ddpm_update(x, e, z, 1.01, 0.1, 0.1, np.float32, impl=impl)


def sampling_case():
    gmm = GaussianMixture([0.3, 0.7], [-1.5, 1.5], [0.3, 0.3])
    s = build_schedule("linear", 200)
    oracle = make_gmm_oracle(gmm, s)

    def run(impl):
        saved = kernels._impl
        kernels._impl = impl
        try:
            sample_unconditional(oracle, s, (20000, 1, 1, 1), 0)
        finally:
            kernels._impl = saved
    return run


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    cases = [
        ("gmm posterior mean, 20000 x 1, K=2", gmm_case(20000, GaussianMixture([0.3, 0.7], [-1.5, 1.5], [0.3, 0.3]))),
        ("gmm posterior mean, 5000 x 2, K=101", gmm_case(5000, equicorrelated_gaussian(2, 0.9))),
        ("ddpm update, 1e6 float32", ddpm_case(1_000_000)),
        ("oracle sampling, 20000 chains, T=200", sampling_case()),
    ]
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels is not None else [])
    print(f"{'case':40s}" + "".join(f"{name:>12s}" for name, _ in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label, fn in cases:
        times = []
        for _, impl in backends:
            n = 1 if "sampling" in label else 10
            times.append(min(timeit.repeat(lambda: fn(impl), number=n, repeat=args.repeat)) / n)
        row = f"{label:40s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)
    if _ckernels is None:
        print("compiled extension not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
