"""
Norm-bounded input perturbations.

All generators work on a single sample or on a batch (rows of ``x``) and
return perturbations of the same shape. Norms are selected by ``p`` which is
``2`` or ``inf`` (``np.inf``; the strings ``"inf"`` and ``"linf"`` are also
accepted).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LossModel

__all__ = [
    "PerturbationSpec",
    "parse_norm",
    "project_ball",
    "closed_form_max",
    "fgm",
    "fgsm",
    "pgd",
    "deepfool_linear",
    "perturb",
]

GENERATORS = ("closed_form", "fgm", "fgsm", "pgd")
_TINY = 1e-12


def parse_norm(p):
    if isinstance(p, str):
        key = p.strip().lower()
        if key in ("inf", "linf", "l_inf", "infinity"):
            return np.inf
        if key in ("2", "l2"):
            return 2
        raise ValueError(f"unsupported norm {p!r}")
    if p == 2:
        return 2
    if np.isinf(p):
        return np.inf
    raise ValueError(f"unsupported norm {p!r}; only 2 and inf are supported")


def norm_name(p) -> str:
    return "inf" if np.isinf(p) else "2"


@dataclass(frozen=True)
class PerturbationSpec:
    """One agent's attack model.

    ``pgd_step_size`` of ``None`` means ``2 * epsilon / pgd_steps``.
    """

    p: float = 2
    epsilon: float = 0.0
    generator: str = "closed_form"
    pgd_steps: int = 10
    pgd_step_size: float | None = None
    pgd_random_init: bool = False

    def __post_init__(self):
        object.__setattr__(self, "p", parse_norm(self.p))
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}; expected one of {GENERATORS}")
        if self.generator == "fgsm" and self.p != np.inf:
            raise ValueError("fgsm requires the l_inf norm")
        if self.generator == "fgm" and self.p != 2:
            raise ValueError("fgm requires the l2 norm")
        if self.generator == "pgd" and self.pgd_steps < 1:
            raise ValueError("pgd needs at least one step")

    @property
    def step_size(self) -> float:
        if self.pgd_step_size is not None:
            return float(self.pgd_step_size)
        return 2.0 * self.epsilon / self.pgd_steps

    def to_dict(self) -> dict:
        return {
            "p": norm_name(self.p),
            "epsilon": self.epsilon,
            "generator": self.generator,
            "pgd_steps": self.pgd_steps,
            "pgd_step_size": self.pgd_step_size,
            "pgd_random_init": self.pgd_random_init,
        }


def _rows(v):
    v = np.asarray(v, dtype=float)
    return np.atleast_2d(v), v.ndim == 1


def project_ball(v, p, epsilon):
    """Euclidean projection onto ``{d : ||d||_p <= epsilon}`` (row-wise)."""
    p = parse_norm(p)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    V, single = _rows(v)
    if p == 2:
        n = np.linalg.norm(V, axis=1, keepdims=True)
        scale = np.minimum(1.0, epsilon / np.maximum(n, _TINY))
        out = np.where(n > epsilon, V * scale, V)
    else:
        out = np.clip(V, -epsilon, epsilon)
    return out[0] if single else out


def _unit(V, p):
    """Maximizer of ``d^T v`` over the unit ``p``-ball, row-wise; zero rows stay zero."""
    if p == 2:
        n = np.linalg.norm(V, axis=1, keepdims=True)
        return np.where(n < _TINY, 0.0, V / np.maximum(n, _TINY))
    return np.sign(V)


def closed_form_max(model: LossModel, w, x, y, spec: PerturbationSpec):
    """Exact maximizer of ``Q(w; x + d, y)`` over ``||d||_p <= epsilon``.

    Available for the linear kinds. The losses there depend on ``d`` only
    through ``w^T d``: the margin losses are decreasing in ``y w^T (x + d)`` and
    the regression losses are increasing in ``|w^T (x + d) - y|``. A zero
    residual makes both signs optimal; ``+1`` is used. ``w = 0`` makes every
    feasible ``d`` optimal and the zero perturbation is returned.
    """
    if not model.is_linear:
        raise ValueError(f"no closed-form maximizer for model kind {model.kind!r}")
    X, single = _rows(x)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    w = np.asarray(w, dtype=float)
    if spec.epsilon == 0 or not np.any(w):
        out = np.zeros_like(X)
        return out[0] if single else out
    direction = _unit(w[None, :], spec.p)[0]
    if model.kind in ("logistic", "exponential"):
        sgn = -np.sign(y)
    else:
        sgn = np.where(X @ w - y >= 0, 1.0, -1.0)
    out = spec.epsilon * sgn[:, None] * direction[None, :]
    return out[0] if single else out


def fgm(model: LossModel, w, x, y, epsilon):
    """Single normalized-gradient step of length ``epsilon`` (l2 attack)."""
    X, single = _rows(x)
    out = epsilon * _unit(np.atleast_2d(model.grad_x(w, X, np.atleast_1d(y))), 2)
    return out[0] if single else out


def fgsm(model: LossModel, w, x, y, epsilon):
    """Single gradient-sign step of size ``epsilon`` (l_inf attack); sign(0) = 0."""
    X, single = _rows(x)
    out = epsilon * np.sign(model.grad_x(w, X, np.atleast_1d(y)))
    return out[0] if single else out


def _random_in_ball(rng, shape, p, epsilon):
    if p != 2:
        return rng.uniform(-epsilon, epsilon, size=shape)
    B, M = shape
    d = rng.standard_normal(shape)
    d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), _TINY)
    r = epsilon * rng.uniform(size=(B, 1)) ** (1.0 / M)
    return d * r


def pgd(model: LossModel, w, x, y, spec: PerturbationSpec, rng=None):
    """Projected multi-step FGM (l2) or FGSM (l_inf).

    ``rng`` is required when ``spec.pgd_random_init`` is set.
    """
    X, single = _rows(x)
    y = np.atleast_1d(y)
    p, eps = spec.p, spec.epsilon
    if eps == 0:
        out = np.zeros_like(X)
        return out[0] if single else out
    if spec.pgd_random_init:
        if rng is None:
            raise ValueError("random PGD initialization needs an rng")
        delta = _random_in_ball(rng, X.shape, p, eps)
    else:
        delta = np.zeros_like(X)
    alpha = spec.step_size
    for _ in range(spec.pgd_steps):
        g = np.atleast_2d(model.grad_x(w, X + delta, y))
        delta = project_ball(delta + alpha * _unit(g, p), p, eps)
    return delta[0] if single else delta


def deepfool_linear(w, x, overshoot=0.02):
    """Minimal l2 step onto the decision boundary of ``sign(w^T x)``, times ``1 + overshoot``."""
    w = np.asarray(w, dtype=float)
    nw2 = float(w @ w)
    if nw2 == 0:
        raise ValueError("deepfool needs a nonzero weight vector (no decision boundary)")
    if overshoot < 0:
        raise ValueError("overshoot must be nonnegative")
    X, single = _rows(x)
    s = X @ w
    out = -(1.0 + overshoot) * (s / nw2)[:, None] * w[None, :]
    return out[0] if single else out


def perturb(model: LossModel, w, x, y, spec: PerturbationSpec, rng=None):
    """Dispatch on ``spec.generator``; ``epsilon = 0`` always gives zero."""
    if spec.epsilon == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    if spec.generator == "closed_form":
        return closed_form_max(model, w, x, y, spec)
    if spec.generator == "fgm":
        return fgm(model, w, x, y, spec.epsilon)
    if spec.generator == "fgsm":
        return fgsm(model, w, x, y, spec.epsilon)
    return pgd(model, w, x, y, spec, rng)
