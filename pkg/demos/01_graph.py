"""
Building a communication graph
==============================

Agents sit at random points in the unit square and talk to neighbours that
are close enough. Metropolis weights turn the adjacency into a doubly
stochastic combination matrix whose second eigenvalue sets the mixing speed.
"""

import numpy as np

from decadv.graph import generate_geometric_adjacency, metropolis_weights, mixing_rate, perron_vector

# %% a 20-agent graph; lower thresholds give sparser graphs
adj = generate_geometric_adjacency(K=20, threshold=0.3, seed=0)
comb = metropolis_weights(adj)
print("edges:", len(adj.edges()))
print("degrees:", adj.degrees())

# %% columns sum to one, and so do rows here
A = comb.A
print("column sums:", np.round(A.sum(axis=0), 12))
print("Perron vector is uniform:", np.allclose(perron_vector(A), 1 / adj.K))

# %% repeated averaging contracts towards consensus at rate |lambda_2|
lam = mixing_rate(A)
x = np.random.default_rng(1).standard_normal(adj.K)
for t in (0, 10, 20, 40):
    xt = np.linalg.matrix_power(A.T, t) @ x
    print(f"t={t:3d}  spread={np.ptp(xt):.2e}  lambda2^t={lam ** t:.2e}")

# %% sparser graphs mix more slowly
for thr in (0.25, 0.3, 0.4, 0.6):
    a = generate_geometric_adjacency(20, thr, 0)
    print(f"threshold {thr}: lambda2 = {mixing_rate(metropolis_weights(a).A):.3f}")
