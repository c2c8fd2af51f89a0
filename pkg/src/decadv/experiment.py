"""
Assemble runnable experiments from a resolved configuration dict.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import (Dataset, agent_rng, freeze_sources, gen_synthetic_binary, load_csv_dataset,
                   partition_over_agents, to_signed_labels, train_test_split)
from .graph import (Adjacency, CombinationMatrix, generate_geometric_adjacency, load_graph,
                    metropolis_weights)
from .metrics import MetricsEvaluator, probe_network_smoothness, solve_reference_minimizer
from .model import LossModel
from .perturb import PerturbationSpec, parse_norm
from .train import TrainConfig

log = logging.getLogger(__name__)

__all__ = ["Experiment", "build_graph", "build_model", "build_specs", "build_experiment"]


@dataclass
class Experiment:
    adj: Adjacency
    comb: CombinationMatrix
    model: LossModel
    sources: list
    testset: Dataset
    train: TrainConfig
    evaluator: MetricsEvaluator


def build_graph(cfg):
    g = cfg["graph"]
    if g["path"]:
        return load_graph(g["path"])
    adj = generate_geometric_adjacency(g["K"], g["threshold"], g["seed"])
    return adj, metropolis_weights(adj)


def build_model(cfg, dim) -> LossModel:
    m = cfg["model"]
    return LossModel(m["kind"], dim, rho=m["rho"], tau=m["tau"], hidden=tuple(m["hidden"]),
                     n_classes=m["n_classes"])


def _generator_for(model, p, requested):
    if requested != "auto":
        return requested
    if model.is_linear:
        return "closed_form"
    return "fgm" if p == 2 else "fgsm"


def build_specs(cfg, model, K) -> list:
    """Per-agent attack specs for the configured heterogeneity pattern.

    ``clean+adv`` trains the first half of the agents adversarially and the
    rest on clean samples; ``l2+linf`` gives the first half l2 attacks of size
    ``epsilon`` and the rest l_inf attacks of size ``epsilon_linf``.
    """
    a = cfg["attack"]

    def make(p, eps, generator=None):
        p = parse_norm(p)
        return PerturbationSpec(p=p, epsilon=eps, generator=_generator_for(model, p, generator or a["generator"]),
                                pgd_steps=a["pgd_steps"], pgd_step_size=a["pgd_step_size"],
                                pgd_random_init=a["pgd_random_init"])

    if a["specs"] is not None:
        specs = [make(s.get("p", a["norm"]), s.get("epsilon", a["epsilon"]), s.get("generator"))
                 for s in a["specs"]]
        if len(specs) not in (1, K):
            raise ValueError(f"[attack] specs lists {len(specs)} entries for {K} agents")
        return specs * K if len(specs) == 1 else specs
    half = (K + 1) // 2
    if a["pattern"] == "homogeneous":
        return [make(a["norm"], a["epsilon"])] * K
    if a["pattern"] == "clean+adv":
        return [make(a["norm"], a["epsilon"])] * half + [make(a["norm"], 0.0)] * (K - half)
    eps_inf = a["epsilon"] if a["epsilon_linf"] is None else a["epsilon_linf"]
    return [make(2, a["epsilon"])] * half + [make("inf", eps_inf)] * (K - half)


def build_data(cfg, K):
    """Agent sources and a test set."""
    d = cfg["data"]
    if d["source"] == "synthetic":
        sources = gen_synthetic_binary(K, d["dim"], d["heterogeneity"], d["seed"],
                                       separation=d["separation"], feature_std=d["feature_std"])
        rng = agent_rng(d["seed"], 0x7E57)
        per = int(np.ceil(cfg["eval"]["test_size"] / K))
        testset = Dataset.concat(s.draw(per, rng) for s in sources)
        if d["pool_size"] > 0:
            sources = freeze_sources(sources, d["pool_size"], d["seed"])
        return sources, testset
    data = load_csv_dataset(d["path"], d["label_column"], d["normalize"])
    if d["test_path"]:
        test = load_csv_dataset(d["test_path"], d["label_column"], d["normalize"])
    else:
        data, test = train_test_split(data, d["test_fraction"], d["seed"])
    if cfg["model"]["kind"] != "mlp":
        data = Dataset(data.X, to_signed_labels(data.y))
        test = Dataset(test.X, to_signed_labels(test.y)) if len(test) else test
    return partition_over_agents(data, K, d["partition"], d["seed"]), test


def build_experiment(cfg) -> Experiment:
    adj, comb = build_graph(cfg)
    K = comb.K
    sources, testset = build_data(cfg, K)
    model = build_model(cfg, sources[0].dim)
    specs = build_specs(cfg, model, K)
    t = cfg["train"]
    train = TrainConfig(
        strategy=t["strategy"], mu=t["mu"], batch_size=t["batch_size"], iterations=t["iterations"],
        specs=specs, seed=t["seed"], record_every=t["record_every"],
        divergence_threshold=t["divergence_threshold"], init_scale=t["init_scale"],
        mu_decay=[tuple(x) for x in t["mu_decay"]], workers=t["workers"],
    )
    evaluator = build_evaluator(cfg, model, comb, sources, testset, specs)
    return Experiment(adj, comb, model, sources, testset, train, evaluator)


def build_evaluator(cfg, model, comb, sources, testset, specs) -> MetricsEvaluator:
    m = cfg["metrics"]
    K = comb.K
    if all(s.mode == "pool" for s in sources):
        eval_sets = [s.pool for s in sources]
    else:
        per = max(1, m["eval_size"] // K)
        eval_sets = [s.pool for s in freeze_sources(sources, per, m["seed"])]
    w_star = None
    if m["reference"]:
        w_star = solve_reference_minimizer(model, eval_sets, comb.pi, specs)
    L = m["moreau_L"]
    if L == "probe":
        L = probe_network_smoothness(model, eval_sets, agent_rng(m["seed"], 0x1A))
        log.info("probed smoothness constant L = %.4g", L)
    adv_test = adv_spec = None
    if m["adv_epsilon"] is not None:
        a = cfg["attack"]
        p = parse_norm(a["norm"])
        adv_spec = PerturbationSpec(p=p, epsilon=m["adv_epsilon"], generator=_generator_for(model, p, a["generator"]),
                                    pgd_steps=a["pgd_steps"], pgd_step_size=a["pgd_step_size"])
        adv_test = testset.subset(np.arange(min(m["adv_test_size"], len(testset))))
    return MetricsEvaluator(
        model=model, pi=comb.pi, specs=specs, eval_sets=eval_sets, w_star=w_star,
        adv_test=adv_test, adv_spec=adv_spec, moreau_L=L,
        moreau_inner_steps=m["moreau_inner_steps"], moreau_inner_tol=m["moreau_inner_tol"],
        noise_sources=sources if m["noise_trials"] else None,
        noise_batch=m["noise_batch"] or cfg["train"]["batch_size"], noise_trials=m["noise_trials"],
        seed=m["seed"],
    )
