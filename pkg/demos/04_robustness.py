"""
Does adversarial training buy robustness?
=========================================

The data has one strong but fragile feature (small spread, small margin) and
one weak but sturdy feature. A clean network leans on the fragile one and
collapses once the attack budget covers its margin. An adversarially trained
network gives it up and degrades gracefully.
"""

import numpy as np

from decadv.data import agent_rng, gen_synthetic_binary
from decadv.data import Dataset
from decadv.graph import generate_geometric_adjacency, metropolis_weights
from decadv.metrics import robustness_curve
from decadv.model import LossModel
from decadv.perturb import PerturbationSpec
from decadv.svg import line_chart
from decadv.train import TrainConfig, run_training

K = 10
comb = metropolis_weights(generate_geometric_adjacency(K, 0.3, 0))
sources = gen_synthetic_binary(K, 2, separation=[1.5, 0.3], feature_std=[1.0, 0.1], seed=0)
test = Dataset.concat([s.draw(200, agent_rng(0, 0x7E57, k)) for k, s in enumerate(sources)])
model = LossModel("logistic", 2)
epsilons = np.round(np.arange(0, 0.61, 0.1), 2)

series = {}
for label, eps in (("clean", 0.0), ("adversarial", 0.5)):
    cfg = TrainConfig(mu=0.1, batch_size=5, iterations=4000, specs=[PerturbationSpec(2, eps)])
    W = run_training(cfg, comb, model, sources).state.W
    curve = robustness_curve(W, model, test, "closed_form", epsilons, p=2)
    series[label] = (epsilons, [c["mean_error"] for c in curve])
    print(label, "w =", np.round(W.mean(axis=0), 3))
    print("  errors:", " ".join(f"{e:.3f}" for e in series[label][1]))

line_chart(series, "robustness.svg", title="error under l2 attack", xlabel="epsilon", ylabel="error")
print("wrote robustness.svg")
