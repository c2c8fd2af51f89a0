"""
Decentralized adversarial training.

The block iterate ``W`` has one row per agent. Both decentralized strategies
are instances of ``W_n = A2^T (A1^T W_{n-1} - mu Q_n)`` where row ``k`` of
``Q_n`` is agent ``k``'s adversarial mini-batch gradient:

* diffusion (adapt then combine): ``A1 = I``, ``A2 = A``
* consensus: ``A1 = A``, ``A2 = I``; the gradient stays at the old local iterate

Non-cooperative training is diffusion with ``A = I``; centralized training
keeps one shared model and averages all agents' gradients.
"""

from __future__ import annotations

import copy
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import agent_rng, next_minibatch
from .graph import CombinationMatrix
from .model import LossModel
from .perturb import PerturbationSpec, perturb

__all__ = [
    "STRATEGIES",
    "NetworkState",
    "TrainConfig",
    "TrainResult",
    "DivergenceError",
    "init_state",
    "local_gradients",
    "diffusion_step",
    "consensus_step",
    "centralized_step",
    "run_training",
]

log = logging.getLogger(__name__)

STRATEGIES = ("diffusion", "consensus", "noncooperative", "centralized")


@dataclass
class NetworkState:
    W: np.ndarray
    n: int
    rngs: list

    @property
    def K(self) -> int:
        return self.W.shape[0]

    def copy(self) -> "NetworkState":
        return NetworkState(self.W.copy(), self.n, copy.deepcopy(self.rngs))


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``specs`` holds one :class:`PerturbationSpec` per agent, or a single one
    that is shared. ``mu_decay`` lists ``(iteration, factor)`` milestones: the
    step size is multiplied by ``factor`` from that iteration on.
    """

    strategy: str = "diffusion"
    mu: float = 0.01
    batch_size: int = 1
    iterations: int = 1000
    specs: list = field(default_factory=lambda: [PerturbationSpec()])
    seed: int = 0
    record_every: int = 1
    divergence_threshold: float = 1e8
    init_scale: float = 0.0
    mu_decay: list = field(default_factory=list)
    workers: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not self.mu > 0:
            raise ValueError("step size must be positive")
        if self.batch_size < 1 or self.iterations < 0 or self.record_every < 1:
            raise ValueError("batch size and record_every must be >= 1, iterations >= 0")
        if not self.specs:
            raise ValueError("at least one perturbation spec is required")

    def specs_for(self, K) -> list:
        if len(self.specs) == 1:
            return list(self.specs) * K
        if len(self.specs) != K:
            raise ValueError(f"{len(self.specs)} perturbation specs for {K} agents")
        return list(self.specs)

    def step_size(self, n) -> float:
        """Step size used by iteration ``n`` (1-based)."""
        mu = self.mu
        for start, factor in sorted(self.mu_decay):
            if n > start:
                mu *= factor
        return mu


class DivergenceError(RuntimeError):
    def __init__(self, n, agent, result=None):
        super().__init__(f"iterate of agent {agent} diverged at iteration {n}")
        self.n = n
        self.agent = agent
        self.result = result


@dataclass
class TrainResult:
    state: NetworkState
    records: list
    trajectory: list
    diverged: DivergenceError | None = None


def init_state(model: LossModel, K, config: TrainConfig) -> NetworkState:
    """All agents share one initial model (zero for linear kinds by default)."""
    w0 = model.init_params(agent_rng(config.seed, 0x1D17), config.init_scale)
    rngs = [agent_rng(config.seed, 0xA6E7, k) for k in range(K)]
    return NetworkState(np.tile(w0, (K, 1)), 0, rngs)


def draw_batches(state: NetworkState, sources, B):
    return [next_minibatch(src, B, rng) for src, rng in zip(sources, state.rngs)]


def local_gradients(state, model, batches, specs, workers=1) -> np.ndarray:
    """Adversarial mini-batch gradient of every agent at its current iterate.

    Perturbations for the whole batch are built from the iteration-start
    model ``w_{k,n-1}`` and each agent only touches its own RNG stream, so the
    result does not depend on ``workers``.
    """

    def one(k):
        X, y = batches[k]
        w = state.W[k]
        delta = perturb(model, w, X, y, specs[k], state.rngs[k])
        return model.mean_grad_w(w, X + delta, y)

    K = state.K
    if workers > 1 and K > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(K)))
    else:
        rows = [one(k) for k in range(K)]
    return np.vstack(rows)


def _check_finite(W, n, threshold):
    bad = ~np.isfinite(W).all(axis=1) | (np.linalg.norm(W, axis=1) > threshold)
    if bad.any():
        raise DivergenceError(n, int(np.flatnonzero(bad)[0]))


def diffusion_step(state, comb, batches, config, model, specs=None) -> NetworkState:
    """Adapt at every agent, then combine the intermediate iterates."""
    specs = specs or config.specs_for(state.K)
    n = state.n + 1
    G = local_gradients(state, model, batches, specs, config.workers)
    phi = state.W - config.step_size(n) * G
    W = comb.A.T @ phi
    _check_finite(W, n, config.divergence_threshold)
    return NetworkState(W, n, state.rngs)


def consensus_step(state, comb, batches, config, model, specs=None) -> NetworkState:
    """Combine the previous iterates, then subtract the gradient taken at the old local iterate."""
    specs = specs or config.specs_for(state.K)
    n = state.n + 1
    G = local_gradients(state, model, batches, specs, config.workers)
    W = comb.A.T @ state.W - config.step_size(n) * G
    _check_finite(W, n, config.divergence_threshold)
    return NetworkState(W, n, state.rngs)


def centralized_step(state, batches, config, model, specs=None) -> NetworkState:
    """Server update with the uniform average of all agents' gradients.

    The shared model is stored on every row of ``W``.
    """
    specs = specs or config.specs_for(state.K)
    n = state.n + 1
    G = local_gradients(state, model, batches, specs, config.workers)
    w = state.W[0] - config.step_size(n) * G.mean(axis=0)
    W = np.tile(w, (state.K, 1))
    _check_finite(W, n, config.divergence_threshold)
    return NetworkState(W, n, state.rngs)


def run_training(config: TrainConfig, comb: CombinationMatrix, model: LossModel, sources,
                 evaluator=None, keep_trajectory=False, state=None) -> TrainResult:
    """Run ``config.iterations`` steps of the configured strategy.

    Parameters
    ----------
    evaluator : callable, optional
        ``evaluator(state) -> MetricsRecord``; called after every
        ``record_every``-th iteration.
    keep_trajectory : bool
        Keep a copy of the iterate block at every recorded iteration.

    Raises
    ------
    DivergenceError
        With ``.result`` holding the trajectory up to the last good state.
    """
    K = len(sources)
    if comb.K != K:
        raise ValueError(f"combination matrix is {comb.K}x{comb.K} but there are {K} agents")
    specs = config.specs_for(K)
    if config.strategy == "noncooperative":
        comb = CombinationMatrix.identity(K)
    state = state or init_state(model, K, config)
    records, trajectory = [], []
    for _ in range(config.iterations):
        batches = draw_batches(state, sources, config.batch_size)
        try:
            if config.strategy in ("diffusion", "noncooperative"):
                state = diffusion_step(state, comb, batches, config, model, specs)
            elif config.strategy == "consensus":
                state = consensus_step(state, comb, batches, config, model, specs)
            else:
                state = centralized_step(state, batches, config, model, specs)
        except DivergenceError as err:
            log.warning("%s", err)
            err.result = TrainResult(state, records, trajectory, err)
            raise
        if state.n % config.record_every == 0:
            if evaluator is not None:
                records.append(evaluator(state))
            if keep_trajectory:
                trajectory.append(state.W.copy())
    return TrainResult(state, records, trajectory)
