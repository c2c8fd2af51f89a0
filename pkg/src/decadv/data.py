"""
Per-agent data: synthetic Gaussian streams, CSV data sets, partitions, and
seeded mini-batch sampling.

Every agent owns an :class:`AgentDataSource`. A source either draws fresh
samples from its class-conditional Gaussian (``mode="stream"``) or resamples,
with replacement, from a fixed pool (``mode="pool"``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "AgentDataSource",
    "agent_rng",
    "gen_synthetic_binary",
    "freeze_sources",
    "load_csv_dataset",
    "to_signed_labels",
    "train_test_split",
    "partition_over_agents",
    "next_minibatch",
]


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError(f"inconsistent dataset shapes {X.shape} and {y.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])

    @staticmethod
    def concat(parts) -> "Dataset":
        parts = list(parts)
        return Dataset(np.vstack([d.X for d in parts]), np.concatenate([d.y for d in parts]))


@dataclass(frozen=True)
class AgentDataSource:
    agent: int
    mode: str
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    pool: Dataset | None = None
    indices: np.ndarray | None = None

    def __post_init__(self):
        if self.mode == "stream":
            if self.mean is None or self.std is None:
                raise ValueError("a stream source needs a class mean and feature scale")
        elif self.mode == "pool":
            if self.pool is None or len(self.pool) == 0:
                raise ValueError("a pool source needs at least one sample")
        else:
            raise ValueError(f"unknown source mode {self.mode!r}")

    @property
    def dim(self) -> int:
        return len(self.mean) if self.mode == "stream" else self.pool.dim

    def draw(self, n, rng) -> Dataset:
        """``n`` fresh samples (stream) or ``n`` resamples with replacement (pool)."""
        if self.mode == "stream":
            y = rng.choice(np.array([-1.0, 1.0]), size=n)
            X = y[:, None] * self.mean[None, :] + self.std * rng.standard_normal((n, len(self.mean)))
            return Dataset(X, y)
        idx = rng.integers(len(self.pool), size=n)
        return self.pool.subset(idx)


def agent_rng(seed, *key) -> np.random.Generator:
    """Independent generator keyed by the master seed and an identifying tuple."""
    return np.random.default_rng([int(seed), *[int(k) for k in key]])


def gen_synthetic_binary(K, M, heterogeneity=0.0, seed=0, separation=1.0, feature_std=1.0):
    """Class-conditional Gaussian sources, one per agent.

    Agent ``k`` draws ``y`` uniformly from ``{-1, +1}`` and
    ``x | y ~ N(y (m0 + s_k), diag(feature_std^2))`` where
    ``m0 = separation * 1 / sqrt(M)`` unless ``separation`` is a vector, and
    ``s_k`` is a random direction of length ``heterogeneity``.

    ``feature_std`` may be a scalar or a length-``M`` vector; anisotropic scales
    produce features that are predictive yet fragile under small perturbations.
    """
    if K < 1 or M < 1:
        raise ValueError("K and M must be positive")
    if heterogeneity < 0:
        raise ValueError("heterogeneity must be nonnegative")
    sep = np.asarray(separation, dtype=float)
    m0 = sep if sep.ndim == 1 else np.full(M, float(sep) / np.sqrt(M))
    std = np.broadcast_to(np.asarray(feature_std, dtype=float), (M,)).copy()
    if m0.shape != (M,):
        raise ValueError("separation vector must have length M")
    rng = np.random.default_rng([int(seed), 0xDA7A])
    sources = []
    for k in range(K):
        s = rng.standard_normal(M)
        s *= heterogeneity / max(np.linalg.norm(s), 1e-300)
        sources.append(AgentDataSource(agent=k, mode="stream", mean=m0 + s, std=std))
    return sources


def freeze_sources(sources, n_per_agent, seed):
    """Replace stream sources by fixed pools of ``n_per_agent`` draws each."""
    out = []
    for src in sources:
        if src.mode == "pool":
            out.append(src)
            continue
        pool = src.draw(n_per_agent, agent_rng(seed, 0xF0, src.agent))
        out.append(AgentDataSource(agent=src.agent, mode="pool", pool=pool))
    return out


def load_csv_dataset(path, label_column=-1, normalize=False, header=None) -> Dataset:
    """Read a numeric CSV file.

    Parameters
    ----------
    path : path-like
    label_column : int or str
        Column index (negative counts from the end) or header name.
    normalize : bool
        Min-max scale every feature to ``[0, 1]``; constant columns become 0.
    header : bool or None
        Whether the first row is a header; ``None`` detects it (a first row
        with any non-numeric cell is a header).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open(newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    names = None
    first = rows[0][1]
    if header is None:
        header = not all(_is_number(c) for c in first)
    if header:
        names = [c.strip() for c in first]
        rows = rows[1:]
    width = len(first)
    if isinstance(label_column, str):
        if names is None or label_column not in names:
            raise ValueError(f"{path}: missing label column {label_column!r}")
        lab = names.index(label_column)
    else:
        lab = label_column if label_column >= 0 else width + label_column
        if not 0 <= lab < width:
            raise ValueError(f"{path}: missing label column {label_column}")
    values = np.empty((len(rows), width))
    for r, (lineno, cells) in enumerate(rows):
        if len(cells) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} fields, found {len(cells)}")
        for c, cell in enumerate(cells):
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric cell {cell!r} in column {c}") from None
    y = values[:, lab]
    X = np.delete(values, lab, axis=1)
    if normalize:
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        X = (X - lo) / span
    if np.all(y == np.round(y)):
        y = y.astype(int)
    return Dataset(X, y)


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def to_signed_labels(y) -> np.ndarray:
    """Map a two-valued label vector to ``{-1, +1}`` (smaller value -> -1)."""
    y = np.asarray(y)
    vals = np.unique(y)
    if len(vals) > 2:
        raise ValueError(f"binary labels expected, found {len(vals)} distinct values")
    if len(vals) == 2:
        return np.where(y == vals[1], 1.0, -1.0)
    return np.where(y > 0, 1.0, -1.0)


def train_test_split(dataset: Dataset, test_fraction, seed):
    rng = np.random.default_rng([int(seed), 0x7E57])
    perm = rng.permutation(len(dataset))
    n_test = int(round(test_fraction * len(dataset)))
    return dataset.subset(np.sort(perm[n_test:])), dataset.subset(np.sort(perm[:n_test]))


def partition_over_agents(dataset: Dataset, K, policy="contiguous", seed=0):
    """Split ``dataset`` into ``K`` disjoint pools whose sizes differ by at most one."""
    n = len(dataset)
    if K < 1:
        raise ValueError("K must be positive")
    if K > n:
        raise ValueError(f"cannot partition {n} samples over {K} agents")
    if policy == "contiguous":
        order = np.arange(n)
    elif policy == "shuffled":
        order = np.random.default_rng([int(seed), 0x5A1D]).permutation(n)
    else:
        raise ValueError(f"unknown partition policy {policy!r}")
    return [
        AgentDataSource(agent=k, mode="pool", pool=dataset.subset(idx), indices=idx)
        for k, idx in enumerate(np.array_split(order, K))
    ]


def next_minibatch(source: AgentDataSource, B, rng):
    """Draw ``B`` samples from ``source``; advances only ``rng`` (the agent's stream)."""
    if B < 1:
        raise ValueError("batch size must be positive")
    batch = source.draw(B, rng)
    return batch.X, batch.y
