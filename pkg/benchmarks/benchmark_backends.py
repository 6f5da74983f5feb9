"""Compare the compiled kernel backend against the pure-NumPy fallback.

Times the raw likelihood kernels on representative panel sizes and a short
end-to-end sampler run per backend, printing a table with speedups.

Run:  python benchmarks/benchmark_backends.py
"""
import time

import numpy as np

from attrisk import kernels
from attrisk.model import CovariateSeries, PriorConfig
from attrisk.sampler import SamplerConfig, run_sampler
from attrisk.synthetic import GeneratorSpec, default_ensemble_schedule, generate_panel, sample_prior_state


def time_call(fn, *args, repeat=2000):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def bench_kernels():
    rng = np.random.default_rng(0)
    rows = []
    for T in (8, 32):
        n = np.full(T, 100, dtype=np.int64)
        z = rng.integers(0, 100, (T, 12)).astype(np.int64)
        base = rng.normal(-2, 1, T)
        gamma = rng.normal(0, 1, 12)
        gamma -= gamma.mean()
        per_backend = {}
        for name in kernels.available_backends():
            mod = kernels.get_backend(name)
            per_backend[name] = time_call(mod.bin_loglik_block, z, n, base, gamma, np.inf)
        rows.append((f"bin_loglik_block T={T}", per_backend))
    return rows


def bench_sampler():
    rng = np.random.default_rng(1)
    rows = []
    for T in (8, 32):
        prior = PriorConfig(beta_sd=1.0, var_lower=0.1, var_upper=5.0, cauchy_scale=0.3)
        covs = CovariateSeries.from_raw(np.linspace(-1, 1, T), np.linspace(-1, 1, T) * 0.6)
        truth = sample_prior_state(rng, T, prior)
        spec = GeneratorSpec(np.arange(2000, 2000 + T), default_ensemble_schedule(T), truth, covs, seed=5)
        panel = generate_panel(spec)
        config = SamplerConfig(seed=9, iterations=1500, tune_cycles=1, tune_iterations=(200,))
        per_backend = {}
        for name in kernels.available_backends():
            t0 = time.perf_counter()
            run_sampler(panel, covs, prior, config, backend=name)
            per_backend[name] = (time.perf_counter() - t0) / 1700  # iterations incl. tuning
        rows.append((f"sampler iteration T={T}", per_backend))
    return rows


def main():
    backends = kernels.available_backends()
    print(f"available backends: {', '.join(backends)} (default: {kernels.backend_name()})")
    if "compiled" not in backends:
        print("compiled extension not built; showing numpy fallback only")
    rows = bench_kernels() + bench_sampler()
    width = max(len(r[0]) for r in rows)
    header = f"{'case':<{width}}  " + "  ".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    for label, timings in rows:
        cells = [f"{timings[b] * 1e6:>10.1f}us" for b in backends]
        line = f"{label:<{width}}  " + "  ".join(cells)
        if len(backends) == 2:
            line += f"  {timings['numpy'] / timings['compiled']:>7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
