"""
Loss families with exact gradients in the parameters and in the input.

Every :class:`LossModel` method accepts either a single sample (``x`` of shape
``(M,)``, scalar ``y``) or a batch (``x`` of shape ``(B, M)``, ``y`` of shape
``(B,)``) and returns per-sample results of the matching shape.

Binary kinds use labels in ``{-1, +1}``. The MLP uses class indices; a ``-1``
label is read as class ``0`` so that binary data sets work unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_softmax, softmax

__all__ = [
    "LossModel",
    "LINEAR_KINDS",
    "eval_loss",
    "grad_w",
    "grad_x",
    "probe_smoothness",
]

LINEAR_KINDS = ("logistic", "exponential", "lms", "huber")
KINDS = LINEAR_KINDS + ("mlp",)


@dataclass(frozen=True)
class LossModel:
    """A loss ``Q(w; x, y)`` plus what the theory needs to know about it.

    Parameters
    ----------
    kind : str
        One of ``logistic``, ``exponential``, ``lms``, ``huber``, ``mlp``.
    dim : int
        Feature dimension ``M``.
    rho : float
        Weight of the ``rho * ||w||^2`` regularizer.
    tau : float
        Huber threshold.
    hidden : tuple of int
        Hidden layer widths (MLP only).
    n_classes : int
        Output classes (MLP only).
    """

    kind: str
    dim: int
    rho: float = 0.0
    tau: float = 1.0
    hidden: tuple = (16,)
    n_classes: int = 2
    _shapes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.kind == "huber" and not self.tau > 0:
            raise ValueError("huber threshold tau must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        sizes = (self.dim,) + self.hidden + (self.n_classes,)
        shapes = tuple((sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1))
        object.__setattr__(self, "_shapes", shapes)

    # -- descriptive properties -------------------------------------------

    @property
    def is_linear(self) -> bool:
        return self.kind in LINEAR_KINDS

    @property
    def n_params(self) -> int:
        if self.is_linear:
            return self.dim
        return sum(o * i + o for o, i in self._shapes)

    @property
    def convexity(self) -> str:
        if not self.is_linear:
            return "non-convex"
        return "strongly-convex" if self.rho > 0 else "convex"

    @property
    def strong_convexity(self) -> float:
        """Strong-convexity constant ``nu`` (``2 rho`` for the convex kinds)."""
        return 2.0 * self.rho if self.is_linear else 0.0

    def init_params(self, rng, scale=None) -> np.ndarray:
        """Initial parameter vector.

        Linear kinds start at zero unless ``scale`` is given. The MLP needs a
        random start; the default scale is ``1/sqrt(fan_in)`` per layer.
        """
        if self.is_linear:
            if not scale:
                return np.zeros(self.dim)
            return scale * rng.standard_normal(self.dim)
        parts = []
        for out, inp in self._shapes:
            s = scale if scale else 1.0 / np.sqrt(inp)
            parts.append(s * rng.standard_normal(out * inp))
            parts.append(np.zeros(out))
        return np.concatenate(parts)

    # -- core evaluations -------------------------------------------------

    def loss(self, w, x, y):
        w, x, y, single = self._check(w, x, y)
        if self.is_linear:
            out = self._linear_loss(w, x, y)
        else:
            out = self._mlp_forward(w, x, y)[0]
        out = out + self.rho * np.dot(w, w)
        return out[0] if single else out

    def grad_w(self, w, x, y):
        w, x, y, single = self._check(w, x, y)
        if self.is_linear:
            g = self.dloss_dscore(w @ x.T, y)[:, None] * x
        else:
            g = self._mlp_backward(w, x, y, per_sample=True)[0]
        g = g + 2.0 * self.rho * w
        return g[0] if single else g

    def grad_x(self, w, x, y):
        w, x, y, single = self._check(w, x, y)
        if self.is_linear:
            g = self.dloss_dscore(w @ x.T, y)[:, None] * w[None, :]
        else:
            g = self._mlp_backward(w, x, y, per_sample=False, want_x=True)[1]
        return g[0] if single else g

    def mean_grad_w(self, w, x, y) -> np.ndarray:
        """Gradient of the batch-average loss; the mini-batch step direction."""
        w, x, y, _ = self._check(w, x, y)
        if self.is_linear:
            d = self.dloss_dscore(w @ x.T, y)
            g = d @ x / len(d)
        else:
            g = self._mlp_backward(w, x, y, per_sample=False)[0]
        return g + 2.0 * self.rho * w

    def scores(self, w, x):
        """Linear score ``w^T x`` or MLP logits."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_linear:
            return x @ w
        return self._mlp_logits(w, x)[0]

    def predict(self, w, x):
        s = self.scores(w, x)
        if self.is_linear:
            return np.where(s >= 0, 1, -1)
        return np.argmax(s, axis=1)

    def errors(self, w, x, y) -> np.ndarray:
        """Boolean misclassification indicator per sample."""
        y = np.atleast_1d(y)
        if self.is_linear:
            return self.predict(w, x) != np.sign(y)
        return self.predict(w, x) != _class_index(y)

    # -- linear kinds -----------------------------------------------------

    def _linear_loss(self, w, x, y):
        s = x @ w
        if self.kind == "logistic":
            return np.logaddexp(0.0, -y * s)
        if self.kind == "exponential":
            return np.exp(-y * s)
        r = s - y
        if self.kind == "lms":
            return r**2
        a = np.abs(r)
        return np.where(a <= self.tau, 0.5 * r**2, self.tau * a - 0.5 * self.tau**2)

    def dloss_dscore(self, s, y):
        """Derivative of the unregularized loss in the score ``s = w^T x`` (linear kinds)."""
        if self.kind == "logistic":
            return -y * expit(-y * s)
        if self.kind == "exponential":
            return -y * np.exp(-y * s)
        r = s - y
        if self.kind == "lms":
            return 2.0 * r
        # |r| == tau takes the quadratic branch; both branches agree there
        return np.clip(r, -self.tau, self.tau)

    # -- MLP --------------------------------------------------------------

    def _unpack(self, w):
        mats, pos = [], 0
        for out, inp in self._shapes:
            W = w[pos:pos + out * inp].reshape(out, inp)
            pos += out * inp
            b = w[pos:pos + out]
            pos += out
            mats.append((W, b))
        return mats

    def _mlp_logits(self, w, x):
        acts = [x]
        layers = self._unpack(w)
        h = x
        for i, (W, b) in enumerate(layers):
            z = h @ W.T + b
            h = z if i == len(layers) - 1 else np.tanh(z)
            acts.append(h)
        return h, acts, layers

    def _mlp_forward(self, w, x, y):
        logits, acts, layers = self._mlp_logits(w, x)
        cls = _class_index(y)
        logp = log_softmax(logits, axis=1)
        return -logp[np.arange(len(cls)), cls], logits, acts, layers

    def _mlp_backward(self, w, x, y, per_sample, want_x=False):
        _, logits, acts, layers = self._mlp_forward(w, x, y)
        B = x.shape[0]
        cls = _class_index(y)
        delta = softmax(logits, axis=1)
        delta[np.arange(B), cls] -= 1.0
        grads = []
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            a = acts[i]
            if per_sample:
                grads.append((np.einsum("bo,bi->boi", delta, a).reshape(B, -1), delta))
            else:
                grads.append(((delta.T @ a).ravel() / B, delta.mean(axis=0)))
            if i > 0 or want_x:
                delta = delta @ W
                if i > 0:
                    delta = delta * (1.0 - acts[i] ** 2)
        grads.reverse()
        axis = 1 if per_sample else 0
        g = np.concatenate([np.concatenate([gW, gb], axis=axis) for gW, gb in grads], axis=axis)
        return g, (delta if want_x else None)

    # -- argument handling -----------------------------------------------

    def _check(self, w, x, y):
        w = np.asarray(w, dtype=float)
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if w.shape != (self.n_params,):
            raise ValueError(f"parameter vector has shape {w.shape}, expected ({self.n_params},)")
        if x.shape[1] != self.dim:
            raise ValueError(f"feature dimension {x.shape[1]} does not match model dimension {self.dim}")
        if y.shape != (x.shape[0],):
            raise ValueError(f"{y.shape[0]} labels for {x.shape[0]} samples")
        return w, x, y, single


def _class_index(y):
    y = np.asarray(y)
    return np.where(y < 0, 0, y).astype(int)


def eval_loss(model: LossModel, w, x, y):
    return model.loss(w, x, y)


def grad_w(model: LossModel, w, x, y):
    return model.grad_w(w, x, y)


def grad_x(model: LossModel, w, x, y):
    return model.grad_x(w, x, y)


def probe_smoothness(model: LossModel, x, y, rng, center=None, radius=1.0, pairs=200) -> float:
    """Estimate the gradient-Lipschitz constant by random pair probing.

    Returns the largest observed ratio ``||g(u) - g(v)|| / ||u - v||`` over
    ``pairs`` random pairs, taken for both the parameter gradient (pairs in
    ``w`` around ``center``) and the input gradient (pairs in ``x`` drawn from
    the data). The result is a lower estimate of the true constant.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_1d(y)
    P = model.n_params
    center = np.zeros(P) if center is None else np.asarray(center, dtype=float)
    best = 0.0
    for _ in range(pairs):
        i = rng.integers(len(y))
        u = center + radius * rng.standard_normal(P) / np.sqrt(P)
        v = center + radius * rng.standard_normal(P) / np.sqrt(P)
        num = np.linalg.norm(model.grad_w(u, x[i], y[i]) - model.grad_w(v, x[i], y[i]))
        best = max(best, num / np.linalg.norm(u - v))
        dx = radius * rng.standard_normal(model.dim) / np.sqrt(model.dim)
        num = np.linalg.norm(model.grad_x(u, x[i] + dx, y[i]) - model.grad_x(u, x[i], y[i]))
        best = max(best, num / np.linalg.norm(dx))
    return float(best)
