"""
One gradient step: SGD against Muon
===================================

A single step from W = 0 on the population loss. SGD stores the few items
whose frequency dominates the gradient; the polar map flattens the spectrum
of the gradient and stores many more. We measure capacity for a few
dimensions and fit the exponent of d.
"""
import numpy as np

from assocmem import (
    OptimizerSpec,
    fit_power_law,
    power_law_dist,
    run_trajectory,
    sample_embeddings,
)

N = 5000
alpha = 1.5
dims = [16, 32, 64, 128]
dist = power_law_dist(N, alpha)

results = {"sgd": [], "muon-exact": []}
for d in dims:
    for kind in results:
        caps = []
        for seed in range(3):
            emb = sample_embeddings(d, N, seed=seed)
            rec = run_trajectory(emb, dist, OptimizerSpec(kind), T=1, seed=seed)
            caps.append(rec.steps[-1].capacity.recovered_count)
        results[kind].append(np.mean(caps))
        print(f"d={d:4d}  {kind:11s} mean capacity {np.mean(caps):7.1f}")

# exponents of the mean capacity in d
for kind, caps in results.items():
    fit = fit_power_law(zip(dims, caps), ceiling=N)
    print(f"{kind}: capacity ~ d^{fit.exponent:.2f}  (r^2 = {fit.r_squared:.3f})")

# the one-step rates are 1 + 1/(2 alpha) for Muon and 1/(2 alpha) for SGD,
# reached only once d is large enough that log factors stop mattering
print("asymptotic targets:", 1 + 1 / (2 * alpha), 1 / (2 * alpha))
