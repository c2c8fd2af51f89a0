"""
Diffusion, consensus and going it alone
=======================================

Ten agents with heterogeneous data train an adversarially robust logistic
classifier. Cooperation pulls everyone towards the network minimizer, while
agents that train alone settle at their own local solutions.
"""

import numpy as np

from decadv.data import freeze_sources, gen_synthetic_binary
from decadv.graph import generate_geometric_adjacency, metropolis_weights, perron_vector
from decadv.metrics import msd, network_disagreement, solve_reference_minimizer
from decadv.model import LossModel
from decadv.perturb import PerturbationSpec
from decadv.train import TrainConfig, run_training

K = 10
comb = metropolis_weights(generate_geometric_adjacency(K, 0.3, 0))
pi = perron_vector(comb.A)
sources = freeze_sources(gen_synthetic_binary(K, 2, heterogeneity=0.5, seed=1), 200, seed=1)
model = LossModel("logistic", 2, rho=0.01)
spec = PerturbationSpec(2, 0.1)

pools = [s.pool for s in sources]
w_star = solve_reference_minimizer(model, pools, pi, [spec] * K)
print("network robust minimizer:", np.round(w_star, 4))

for strategy in ("diffusion", "consensus", "noncooperative", "centralized"):
    cfg = TrainConfig(strategy=strategy, mu=0.01, batch_size=5, iterations=5000, specs=[spec], seed=3)
    W = run_training(cfg, comb, model, sources).state.W
    print(f"{strategy:15s} msd={msd(W, w_star):.2e}  disagreement={network_disagreement(W, pi):.2e}")

# %% halving the step size roughly quarters the disagreement
for mu in (0.02, 0.01, 0.005):
    cfg = TrainConfig(mu=mu, batch_size=5, iterations=int(100 / mu), specs=[spec], seed=3,
                      record_every=10)
    res = run_training(cfg, comb, model, sources, keep_trajectory=True)
    tail = res.trajectory[len(res.trajectory) // 2:]
    print(f"mu={mu}: mean disagreement {np.mean([network_disagreement(W, pi) for W in tail]):.2e}")
