"""
Nonconvex training and the Moreau envelope
==========================================

With a small MLP the robust risk is neither convex nor smooth, so progress is
measured by the gradient of its Moreau envelope. The envelope parameter needs
a smoothness constant, which we estimate by probing gradient differences.
"""

import numpy as np

from decadv.data import freeze_sources, gen_synthetic_binary
from decadv.graph import generate_geometric_adjacency, metropolis_weights, perron_vector
from decadv.metrics import moreau_grad_norm, probe_network_smoothness
from decadv.model import LossModel
from decadv.perturb import PerturbationSpec
from decadv.train import TrainConfig, init_state, run_training

K = 5
comb = metropolis_weights(generate_geometric_adjacency(K, 0.3, 0))
pi = perron_vector(comb.A)
sources = freeze_sources(gen_synthetic_binary(K, 2, heterogeneity=0.2, seed=0), 100, seed=0)
pools = [s.pool for s in sources]
model = LossModel("mlp", 2, hidden=(16,))
spec = PerturbationSpec(np.inf, 0.1, "fgsm")

L = probe_network_smoothness(model, pools, np.random.default_rng(0))
print(f"probed smoothness constant L = {L:.2f}")

cfg = TrainConfig(mu=0.01, batch_size=1, iterations=6000, specs=[spec], record_every=100)
res = run_training(cfg, comb, model, sources, keep_trajectory=True)
trajectory = [init_state(model, K, cfg).W] + res.trajectory
for i in (0, 1, 2, 5, 10, 20, 40, 60):
    g = moreau_grad_norm(pi @ trajectory[i], model, pools, pi, [spec] * K, L, inner_steps=200)
    print(f"n={i * 100:5d}  ||grad M||^2 = {g:.4f}")
