"""
Several steps: early acceleration
=================================

GD with the increasing step size schedule needs a few steps before its
recovered set starts to grow, while Muon jumps ahead on the first step.
Later both settle into the same slow growth.
"""
from assocmem import EtaSchedule, EvalOptions, OptimizerSpec, power_law_dist, run_trajectory, sample_embeddings

N, d, alpha, T = 5000, 32, 1.5, 10
dist = power_law_dist(N, alpha)
emb = sample_embeddings(d, N, seed=0)

gd = OptimizerSpec("sgd", eta=EtaSchedule("gd-increasing", 0.01), label="gd-increasing")
muon = OptimizerSpec("muon-exact", eta=EtaSchedule("sqrt-d", 1.0))
opts = EvalOptions(record_loss=True)

for spec in (gd, muon):
    rec = run_trajectory(emb, dist, spec, T, options=opts)
    print(f"{spec.name:14s} capacity", rec.capacities())
    print(f"{'':14s} loss    ", [round(s.loss, 2) for s in rec.steps])

# step sizes of the schedule: eta_t = c * d_{t+1}^alpha
print("gd step sizes:", [round(x, 3) for x in gd.eta.sequence(d, alpha, T)])
