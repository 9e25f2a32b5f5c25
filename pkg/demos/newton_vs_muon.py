"""
Newton against Muon under anisotropy
====================================

At W = 0 the Hessian factors into a left covariance of the output vectors
and a frequency-weighted second moment of the input vectors, so the Newton
step is a two-sided whitening of the gradient. The polar map only fixes the
spectrum, so when the input vectors have a skewed covariance the two part
ways.
"""
import numpy as np

from assocmem import CovarianceSpec, OptimizerSpec, power_law_dist, run_trajectory, sample_embeddings

N, alpha = 5000, 1.5
dist = power_law_dist(N, alpha)

for kappa in (0.0, 1.5):
    cov_v = CovarianceSpec("power-law-diagonal", kappa)
    for d in (16, 32, 64):
        caps = {"newton": [], "muon-exact": []}
        for seed in range(3):
            emb = sample_embeddings(d, N, cov_v=cov_v, seed=seed)
            for kind in caps:
                caps[kind].append(run_trajectory(emb, dist, OptimizerSpec(kind), 1, seed=seed).capacities()[-1])
        n, m = np.mean(caps["newton"]), np.mean(caps["muon-exact"])
        print(f"kappa={kappa}  d={d:3d}  newton {n:6.1f}  muon {m:6.1f}  ratio {n / m:.2f}")
