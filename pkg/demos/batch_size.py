"""
Capacity against batch size
===========================

With a minibatch of size B the gradient only sees the items that were
drawn, so no optimizer can store more than about B^(1/alpha) items. Muon
follows that line much longer than SGD before flattening out; the batch
size where the rise meets the plateau is the critical batch size.
"""
import numpy as np

from assocmem import OptimizerSpec, critical_batch_estimate, power_law_dist, run_trajectory, sample_embeddings
from assocmem.exceptions import EstimationError

N, d, alpha = 5000, 32, 1.5
dist = power_law_dist(N, alpha)
batches = [2**k for k in range(4, 15)]

for kind in ("sgd", "muon-exact"):
    curve = []
    for B in batches:
        caps = [run_trajectory(sample_embeddings(d, N, seed=s), dist, OptimizerSpec(kind), 1,
                               batch_size=B, seed=s).capacities()[-1] for s in range(4)]
        curve.append((B, float(np.mean(caps))))
    print(kind, " ".join(f"{c:.1f}" for _, c in curve))
    try:
        print(f"  critical batch ~ {critical_batch_estimate(curve, alpha):.0f}")
    except EstimationError as exc:
        # SGD can saturate before any point sits clearly on the rising line
        print("  no estimate:", exc)
