"""
Graph topologies and combination matrices.

A combination matrix ``A`` is stored with the convention that entry
``A[l, k]`` is the weight agent ``k`` assigns to information arriving from
neighbor ``l``; columns therefore sum to one (left-stochastic).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Adjacency",
    "CombinationMatrix",
    "GraphGenerationError",
    "NotPrimitiveError",
    "generate_geometric_adjacency",
    "metropolis_weights",
    "perron_vector",
    "verify_strong_connectivity",
    "mixing_rate",
    "save_graph",
    "load_graph",
]

RETRY_BUDGET = 1000


class GraphGenerationError(RuntimeError):
    pass


class NotPrimitiveError(ValueError):
    pass


@dataclass(frozen=True)
class Adjacency:
    """Undirected graph as a symmetric boolean matrix (diagonal = self-loops)."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {mask.shape}")
        if not np.array_equal(mask, mask.T):
            raise ValueError("adjacency must be symmetric")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def K(self) -> int:
        return self.mask.shape[0]

    @classmethod
    def from_edges(cls, K, edges, self_loops=True):
        mask = np.zeros((K, K), dtype=bool)
        for l, k in edges:
            mask[l, k] = mask[k, l] = True
        if self_loops:
            np.fill_diagonal(mask, True)
        return cls(mask)

    def edges(self) -> list[list[int]]:
        """Off-diagonal edges as ``[l, k]`` pairs with ``l < k``."""
        l, k = np.nonzero(np.triu(self.mask, 1))
        return [[int(a), int(b)] for a, b in zip(l, k)]

    def degrees(self) -> np.ndarray:
        """Neighborhood sizes, counting the node itself when it has a self-loop."""
        return self.mask.sum(axis=0)


@dataclass(frozen=True)
class CombinationMatrix:
    A: np.ndarray
    pi: np.ndarray
    lambda2: float

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        pi = np.array(self.pi, dtype=float)
        K = A.shape[0]
        if A.shape != (K, K) or pi.shape != (K,):
            raise ValueError("combination matrix and Perron vector shapes disagree")
        if np.any(A < 0):
            raise ValueError("combination weights must be nonnegative")
        if np.max(np.abs(A.sum(axis=0) - 1.0)) > 1e-12:
            raise ValueError("combination matrix must be left-stochastic (columns sum to 1)")
        if np.max(np.abs(A @ pi - pi)) >= 1e-10 or np.any(pi <= 0):
            raise ValueError("pi is not the Perron vector of A")
        A.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "lambda2", float(self.lambda2))

    @property
    def K(self) -> int:
        return self.A.shape[0]

    @classmethod
    def from_matrix(cls, A):
        A = np.asarray(A, dtype=float)
        return cls(A, perron_vector(A), mixing_rate(A))

    @classmethod
    def identity(cls, K):
        """Combination matrix of K isolated agents (non-cooperative learning).

        The Perron vector is not unique here; the uniform vector is used so
        that centroid metrics remain defined.
        """
        return cls(np.eye(K), np.full(K, 1.0 / K), 1.0 if K > 1 else 0.0)


def _bfs_reach(neighbors, start=0):
    seen = {start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nxt in neighbors(node):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def verify_strong_connectivity(adj: Adjacency) -> bool:
    """True iff BFS from node 0 reaches every node and some node has a self-loop."""
    mask = adj.mask
    K = mask.shape[0]
    if K == 0 or not mask.diagonal().any():
        return False
    reached = _bfs_reach(lambda i: np.flatnonzero(mask[i]), 0)
    return len(reached) == K


def generate_geometric_adjacency(K: int, threshold: float, seed: int) -> Adjacency:
    """Random geometric graph on the unit square.

    Nodes are dropped uniformly on ``[0, 1]^2`` and linked when the mean (over
    the two coordinates) of their squared coordinate differences is below
    ``threshold``. Draws are repeated until the graph is connected.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    rng = np.random.default_rng(seed)
    for _ in range(RETRY_BUDGET):
        coords = rng.uniform(size=(K, 2))
        diff = coords[:, None, :] - coords[None, :, :]
        mask = np.mean(diff**2, axis=-1) < threshold
        np.fill_diagonal(mask, True)
        adj = Adjacency(mask)
        if verify_strong_connectivity(adj):
            return adj
    raise GraphGenerationError(
        f"no connected graph with K={K}, threshold={threshold} "
        f"after the retry budget of {RETRY_BUDGET} draws"
    )


def metropolis_weights(adj: Adjacency) -> CombinationMatrix:
    """Metropolis rule: ``a_lk = 1 / max(n_l, n_k)`` for neighbors ``l != k``."""
    if not verify_strong_connectivity(adj):
        raise ValueError("Metropolis weights need a connected graph with self-loops")
    mask = adj.mask
    n = adj.degrees().astype(float)
    A = np.where(mask, 1.0 / np.maximum(n[:, None], n[None, :]), 0.0)
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, 1.0 - A.sum(axis=0))
    K = adj.K
    return CombinationMatrix(A, np.full(K, 1.0 / K), mixing_rate(A))


def _is_primitive(A):
    support = np.asarray(A) > 0
    K = support.shape[0]
    if not support.diagonal().any():
        return False
    fwd = _bfs_reach(lambda i: np.flatnonzero(support[i]), 0)
    bwd = _bfs_reach(lambda i: np.flatnonzero(support[:, i]), 0)
    return len(fwd) == K and len(bwd) == K


def perron_vector(A, tol=1e-12, max_iter=1_000_000) -> np.ndarray:
    """Right eigenvector of a primitive left-stochastic ``A`` at eigenvalue 1.

    Normalized to sum to one. Computed by power iteration until
    ``||A pi - pi||_inf < tol``.
    """
    A = np.asarray(A, dtype=float)
    K = A.shape[0]
    if not _is_primitive(A):
        raise NotPrimitiveError("matrix is not primitive (needs strong connectivity and a self-loop)")
    pi = np.full(K, 1.0 / K)
    for _ in range(max_iter):
        nxt = A @ pi
        nxt /= nxt.sum()
        if np.max(np.abs(A @ nxt - nxt)) < tol:
            return nxt
        pi = nxt
    raise NotPrimitiveError(f"power iteration did not converge in {max_iter} iterations")


def mixing_rate(A) -> float:
    """Modulus of the second-largest eigenvalue (0 for a single agent)."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] < 2:
        return 0.0
    if np.array_equal(A, A.T):
        mods = np.abs(np.linalg.eigvalsh(A))
    else:
        mods = np.abs(np.linalg.eigvals(A))
    return float(np.sort(mods)[-2])


def graph_to_dict(adj: Adjacency, comb: CombinationMatrix) -> dict:
    return {
        "K": adj.K,
        "edges": adj.edges(),
        "weights": comb.A.tolist(),
        "pi": comb.pi.tolist(),
        "lambda2": comb.lambda2,
    }


def save_graph(path, adj: Adjacency, comb: CombinationMatrix):
    Path(path).write_text(json.dumps(graph_to_dict(adj, comb), indent=1) + "\n")


def load_graph(path) -> tuple[Adjacency, CombinationMatrix]:
    doc = json.loads(Path(path).read_text())
    adj = Adjacency.from_edges(doc["K"], doc["edges"])
    comb = CombinationMatrix(np.array(doc["weights"]), np.array(doc["pi"]), doc["lambda2"])
    if np.any((comb.A > 0) & ~adj.mask):
        raise ValueError(f"{path}: weights place mass outside the edge set")
    return adj, comb
