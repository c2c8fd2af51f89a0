"""
Quantities for monitoring decentralized adversarial training.

The network risk is ``J(w) = sum_k pi_k J_k(w)`` where ``J_k`` is the
empirical adversarial risk of agent ``k`` (its own data, its own attack).
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np

from .data import Dataset, agent_rng, next_minibatch
from .model import LossModel, probe_smoothness
from .perturb import PerturbationSpec, deepfool_linear, parse_norm, perturb, project_ball

__all__ = [
    "MetricsRecord",
    "MetricsEvaluator",
    "ConvergenceError",
    "centroid",
    "network_disagreement",
    "msd",
    "empirical_adversarial_risk",
    "adversarial_risk_grad",
    "network_risk",
    "network_risk_grad",
    "solve_reference_minimizer",
    "robustness_curve",
    "moreau_envelope_grad",
    "moreau_grad_norm",
    "gradient_noise_variance",
    "probe_network_smoothness",
    "tail_mean",
    "write_jsonl",
    "write_csv",
]

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


@dataclass
class MetricsRecord:
    """One row of the metrics stream; fields that were not measured stay ``None``."""

    n: int
    disagreement: float | None = None
    msd: float | None = None
    excess_risk: float | None = None
    adv_error: float | None = None
    moreau_grad_sq: float | None = None
    noise_var: float | None = None

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def centroid(W, pi) -> np.ndarray:
    W = np.atleast_2d(W)
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (W.shape[0],):
        raise ValueError(f"{len(pi)} weights for {W.shape[0]} agents")
    return pi @ W


def network_disagreement(W, pi) -> float:
    """``sum_k ||w_k - w_c||^2`` with ``w_c`` the pi-weighted centroid."""
    W = np.atleast_2d(W)
    return float(np.sum((W - centroid(W, pi)) ** 2))


def msd(W, w_star) -> float:
    """``sum_k ||w_star - w_k||^2``."""
    return float(np.sum((np.atleast_2d(W) - np.asarray(w_star)[None, :]) ** 2))


def empirical_adversarial_risk(model: LossModel, w, data: Dataset, spec: PerturbationSpec, rng=None) -> float:
    delta = perturb(model, w, data.X, data.y, spec, rng)
    return float(np.mean(model.loss(w, data.X + delta, data.y)))


def adversarial_risk_grad(model: LossModel, w, data: Dataset, spec: PerturbationSpec, rng=None):
    """Gradient of the loss at the generated perturbation (exact for unique maximizers)."""
    delta = perturb(model, w, data.X, data.y, spec, rng)
    return model.mean_grad_w(w, data.X + delta, data.y)


def network_risk(model, w, eval_sets, pi, specs, rng=None) -> float:
    return float(sum(p * empirical_adversarial_risk(model, w, d, s, rng)
                     for p, d, s in zip(pi, eval_sets, specs)))


def network_risk_grad(model, w, eval_sets, pi, specs, rng=None) -> np.ndarray:
    return sum(p * adversarial_risk_grad(model, w, d, s, rng)
               for p, d, s in zip(pi, eval_sets, specs))


def solve_reference_minimizer(model: LossModel, eval_sets, pi, specs, tol=1e-10, max_iter=200_000, w0=None):
    """Minimizer of the network's empirical adversarial risk.

    Full-gradient descent using the exact inner maximizers, so the gradient
    is the true gradient of the risk. Step sizes follow Barzilai-Borwein,
    safeguarded by a nonmonotone Armijo test against the worst of the last
    10 objective values. Runs until the gradient norm drops below ``tol``.

    The exact inner maximization adds ``eps_k ||w||_q`` terms that are not
    differentiable at ``w = 0``; the origin is therefore tested for
    optimality by its subdifferential before iterating.
    """
    if not model.is_linear:
        raise ValueError("the reference minimizer needs a convex model with exact maximizers")
    for s in specs:
        if s.epsilon > 0 and s.generator != "closed_form":
            raise ValueError("the reference minimizer needs exact (closed_form) maximizers")
    if model.rho == 0:
        log.info("rho = 0: the minimizer exists only if the data are not separable")
    f = lambda w: network_risk(model, w, eval_sets, pi, specs)
    grad = lambda w: network_risk_grad(model, w, eval_sets, pi, specs)
    if _origin_is_optimal(model, eval_sets, pi, specs):
        return np.zeros(model.n_params)
    w = np.zeros(model.n_params) if w0 is None else np.array(w0, dtype=float)
    step = 1.0
    fw, g = f(w), grad(w)
    history = [fw]
    for _ in range(max_iter):
        gn2 = float(g @ g)
        if np.sqrt(gn2) < tol:
            return w
        ref = max(history[-10:])
        while True:
            cand = w - step * g
            fc = f(cand)
            if fc <= ref - 1e-4 * step * gn2 or step < 1e-16:
                break
            step *= 0.5
        if step < 1e-16:
            break
        g_new = grad(cand)
        s, d = cand - w, g_new - g
        curv = float(s @ d)
        step = float(s @ s) / curv if curv > 0 else 2.0 * step
        step = min(max(step, 1e-10), 1e10)
        w, fw, g = cand, fc, g_new
        history.append(fw)
    raise ConvergenceError(f"gradient norm {np.linalg.norm(g):.3e} after {max_iter} iterations (tol {tol})")


def _origin_is_optimal(model, eval_sets, pi, specs) -> bool:
    """Whether ``0`` lies in the subdifferential of the network risk at ``w = 0``.

    Near the origin agent ``k``'s risk is its smooth part plus
    ``r_k ||w||_q`` with ``q`` dual to ``p_k`` and
    ``r_k = pi_k eps_k mean_i |l'(-y_i)|`` (regression kinds) or
    ``pi_k eps_k |l'(0)|`` (margin kinds). The subdifferential of those terms
    at the origin is a sum of an l2 ball and an l_inf ball.
    """
    zero = np.zeros(model.n_params)
    g0 = sum(p * model.mean_grad_w(zero, d.X, d.y) for p, d in zip(pi, eval_sets))
    r2 = rinf = 0.0
    for p, d, s in zip(pi, eval_sets, specs):
        if s.epsilon == 0:
            continue
        r = p * s.epsilon * float(np.mean(np.abs(model.dloss_dscore(np.zeros(len(d.y)), d.y))))
        if s.p == 2:
            r2 += r
        else:
            rinf += r
    if r2 == 0 and rinf == 0:
        return False
    # distance from g0 to the l_inf ball of radius rinf, measured in l2
    return float(np.linalg.norm(g0 - np.clip(g0, -rinf, rinf))) <= r2 + 1e-15


def _attack_rows(model, w, data, attack, epsilon, p, rng, overshoot, pgd_steps, pgd_random_init):
    X, y = data.X, data.y
    if epsilon == 0:
        return np.zeros_like(X)
    if attack == "deepfool_linear":
        if not np.any(w):
            return np.zeros_like(X)
        delta = np.zeros_like(X)
        hit = ~model.errors(w, X, y)
        delta[hit] = project_ball(deepfool_linear(w, X[hit], overshoot), 2, epsilon)
        return delta
    spec = PerturbationSpec(p=p, epsilon=epsilon, generator=attack,
                            pgd_steps=pgd_steps, pgd_random_init=pgd_random_init)
    return perturb(model, w, X, y, spec, rng)


ATTACKS = ("closed_form", "fgm", "fgsm", "pgd", "deepfool_linear")


def default_norm(attack):
    return np.inf if attack == "fgsm" else 2


def robustness_curve(W, model: LossModel, testset: Dataset, attack, epsilons, p=None, seed=0,
                     overshoot=0.02, pgd_steps=10, pgd_random_init=False):
    """Average classification error over agents versus perturbation size.

    Each agent's model is attacked and evaluated on its own. DeepFool steps
    are applied only to correctly classified samples and clipped to the
    ``epsilon`` ball.

    Returns
    -------
    list of dict
        ``{"epsilon", "mean_error", "per_agent"}`` per grid point.
    """
    if attack not in ATTACKS:
        raise ValueError(f"unknown attack {attack!r}; expected one of {ATTACKS}")
    if attack in ("closed_form", "deepfool_linear") and not model.is_linear:
        raise ValueError(f"attack {attack!r} is incompatible with model kind {model.kind!r}")
    p = default_norm(attack) if p is None else parse_norm(p)
    if attack == "deepfool_linear":
        p = 2
    W = np.atleast_2d(W)
    curve = []
    for i, eps in enumerate(epsilons):
        errs = []
        for k, w in enumerate(W):
            rng = agent_rng(seed, 0xE7A1, i, k)
            delta = _attack_rows(model, w, testset, attack, float(eps), p, rng,
                                 overshoot, pgd_steps, pgd_random_init)
            errs.append(float(np.mean(model.errors(w, testset.X + delta, testset.y))))
        curve.append({"epsilon": float(eps), "mean_error": float(np.mean(errs)), "per_agent": errs})
    return curve


def moreau_envelope_grad(w, risk_grad, L, inner_steps=500, inner_tol=1e-8):
    """Gradient of the Moreau envelope with ``gamma = 1/(2L+1)``.

    Approximates ``z = argmin_z J(z) + (L + 1/2) ||z - w||^2`` by gradient
    descent with step ``1/(2(L+1))`` started at ``w``, and returns
    ``((w - z) / gamma, residual)`` where ``residual`` is the final gradient
    norm of the inner objective.
    """
    if not L > 0:
        raise ValueError("smoothness constant L must be positive")
    w = np.asarray(w, dtype=float)
    coef = 2.0 * L + 1.0
    step = 1.0 / (2.0 * (L + 1.0))
    z = w.copy()
    residual = np.inf
    for _ in range(inner_steps):
        g = risk_grad(z) + coef * (z - w)
        residual = float(np.linalg.norm(g))
        if residual < inner_tol:
            break
        z = z - step * g
    else:
        g = risk_grad(z) + coef * (z - w)
        residual = float(np.linalg.norm(g))
    return coef * (w - z), residual


def moreau_grad_norm(w_c, model, eval_sets, pi, specs, L, inner_steps=500, inner_tol=1e-8, seed=0):
    """Squared norm of the Moreau-envelope gradient of the network risk at ``w_c``.

    Inner non-convergence is reported as a ``RuntimeWarning`` carrying the residual.
    """
    rng = agent_rng(seed, 0x3012)
    grad = lambda z: network_risk_grad(model, z, eval_sets, pi, specs, rng)
    g, residual = moreau_envelope_grad(w_c, grad, L, inner_steps, inner_tol)
    if residual >= inner_tol:
        warnings.warn(f"Moreau inner solver stopped with residual {residual:.3e}", RuntimeWarning, stacklevel=2)
    return float(g @ g)


def gradient_noise_variance(model, w, source, spec, B, trials, rng) -> float:
    """Mean squared deviation of the mini-batch gradient around its empirical mean."""
    if trials < 2:
        raise ValueError("at least two trials are needed")
    G = np.empty((trials, model.n_params))
    for t in range(trials):
        X, y = next_minibatch(source, B, rng)
        delta = perturb(model, w, X, y, spec, rng)
        G[t] = model.mean_grad_w(w, X + delta, y)
    return float(np.mean(np.sum((G - G.mean(axis=0)) ** 2, axis=1)))


def probe_network_smoothness(model, eval_sets, rng, center=None, radius=1.0, pairs=200) -> float:
    """Largest probed gradient-Lipschitz ratio over the pooled evaluation data."""
    data = Dataset.concat(eval_sets)
    return probe_smoothness(model, data.X, data.y, rng, center=center, radius=radius, pairs=pairs)


@dataclass
class MetricsEvaluator:
    """Callable that turns a network state into a :class:`MetricsRecord`.

    Optional parts are enabled by providing their inputs: ``w_star`` for MSD
    and excess risk, ``adv_test`` for the adversarial error, ``moreau_L``
    for the stationarity measure and ``noise_sources`` for the noise variance.
    """

    model: LossModel
    pi: np.ndarray
    specs: list
    eval_sets: list | None = None
    w_star: np.ndarray | None = None
    adv_test: Dataset | None = None
    adv_spec: PerturbationSpec | None = None
    moreau_L: float | None = None
    moreau_inner_steps: int = 500
    moreau_inner_tol: float = 1e-8
    noise_sources: list | None = None
    noise_batch: int = 1
    noise_trials: int = 0
    seed: int = 0

    def __post_init__(self):
        self._risk_star = None
        if self.w_star is not None and self.eval_sets is not None:
            self._risk_star = network_risk(self.model, self.w_star, self.eval_sets, self.pi, self.specs)

    def __call__(self, state) -> MetricsRecord:
        W = state.W
        w_c = centroid(W, self.pi)
        rec = MetricsRecord(n=state.n, disagreement=network_disagreement(W, self.pi))
        if self.w_star is not None:
            rec.msd = msd(W, self.w_star)
            if self._risk_star is not None:
                risk = network_risk(self.model, w_c, self.eval_sets, self.pi, self.specs)
                rec.excess_risk = max(risk - self._risk_star, 0.0)
        if self.adv_test is not None:
            errs = []
            for k, w in enumerate(W):
                delta = perturb(self.model, w, self.adv_test.X, self.adv_test.y, self.adv_spec,
                                agent_rng(self.seed, 0xADE, state.n, k))
                errs.append(np.mean(self.model.errors(w, self.adv_test.X + delta, self.adv_test.y)))
            rec.adv_error = float(np.mean(errs))
        if self.moreau_L is not None and self.eval_sets is not None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rec.moreau_grad_sq = moreau_grad_norm(
                    w_c, self.model, self.eval_sets, self.pi, self.specs, self.moreau_L,
                    self.moreau_inner_steps, self.moreau_inner_tol, seed=self.seed)
        if self.noise_sources is not None and self.noise_trials >= 2:
            rec.noise_var = float(sum(
                p * gradient_noise_variance(self.model, w, src, spec, self.noise_batch, self.noise_trials,
                                            agent_rng(self.seed, 0x0015E, state.n, k))
                for k, (p, w, src, spec) in enumerate(zip(self.pi, W, self.noise_sources, self.specs))))
        return rec


def tail_mean(records, name, fraction=0.1):
    """Mean of ``name`` over the final ``fraction`` of the records that carry it."""
    vals = [getattr(r, name) for r in records if getattr(r, name) is not None]
    if not vals:
        return None
    m = max(1, int(np.ceil(fraction * len(vals))))
    return float(np.mean(vals[-m:]))


def write_jsonl(records, path):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r)) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        return [MetricsRecord(**json.loads(line)) for line in fh if line.strip()]


def write_csv(records, path):
    names = MetricsRecord.field_names()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(names)
        for r in records:
            out.writerow(["" if getattr(r, k) is None else repr(getattr(r, k)) for k in names])
