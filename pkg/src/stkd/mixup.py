"""Virtual samples by mixup over a shuffled copy of the same minibatch."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def check_one_hot(labels, what="labels"):
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2:
        raise ValueError(f"{what} must be 2-D, got shape {labels.shape}")
    ok = np.isin(labels, (0.0, 1.0)).all(axis=1) & (labels.sum(axis=1) == 1.0)
    if not ok.all():
        row = int(np.flatnonzero(~ok)[0])
        raise ValueError(f"{what} row {row} is not one-hot")
    return labels


@dataclass(frozen=True)
class LabeledBatch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        check_one_hot(self.labels)
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels disagree on batch size")

    def __len__(self):
        return len(self.inputs)


@dataclass(frozen=True)
class VirtualBatch:
    """Mixed inputs plus both unmixed label sets.

    ``lam`` is a float for per-batch mixing or a length-B array when every
    pair draws its own coefficient.  ``partner[i]`` is the row that sample
    ``i`` was mixed with.
    """

    inputs: np.ndarray
    labels_a: np.ndarray
    labels_b: np.ndarray
    lam: float | np.ndarray
    partner: np.ndarray | None = None

    def __post_init__(self):
        lam = np.asarray(self.lam)
        if np.any(lam < 0) or np.any(lam > 1):
            raise ValueError(f"mixing coefficient outside [0, 1]: {self.lam}")

    def weights(self):
        """Coefficient broadcastable against (B, k) arrays."""
        lam = np.asarray(self.lam, dtype=np.float64)
        return lam[:, None] if lam.ndim else lam


@dataclass(frozen=True)
class MixPolicy:
    mode: str = "sampled_beta"  # or "fixed"
    alpha: float = 1.0
    fixed_lambda: float = 0.5
    per_batch: bool = True

    def __post_init__(self):
        if self.mode not in ("sampled_beta", "fixed"):
            raise ValueError(f"unknown mix mode {self.mode!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0.0 <= self.fixed_lambda <= 1.0:
            raise ValueError("fixed_lambda must lie in [0, 1]")


def sample_beta(alpha: float, rng: np.random.Generator, size=None):
    """Symmetric Beta(alpha, alpha) via two Gamma(alpha, 1) draws."""
    g1 = rng.standard_gamma(alpha, size=size)
    g2 = rng.standard_gamma(alpha, size=size)
    total = g1 + g2
    # both gammas can underflow for tiny alpha; the limit law is Bernoulli(1/2)
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.where(total > 0, g1 / np.where(total > 0, total, 1.0), (g1 >= g2) * 1.0)
    return float(lam) if size is None else lam


def draw_lambda(policy: MixPolicy, rng: np.random.Generator, batch_size: int):
    if policy.mode == "fixed":
        return policy.fixed_lambda if policy.per_batch else np.full(batch_size, policy.fixed_lambda)
    if policy.per_batch:
        return sample_beta(policy.alpha, rng)
    return sample_beta(policy.alpha, rng, size=batch_size)


def make_virtual_batch(batch: LabeledBatch, policy: MixPolicy, rng: np.random.Generator) -> VirtualBatch:
    x = np.asarray(batch.inputs, dtype=np.float64)
    y = check_one_hot(batch.labels)
    n = len(x)
    if n < 2:
        raise ValueError(f"mixup needs at least 2 samples per batch, got {n}")
    perm = rng.permutation(n)
    lam = draw_lambda(policy, rng, n)
    w = np.asarray(lam)[:, None] if np.ndim(lam) else lam
    mixed = w * x + (1.0 - w) * x[perm]
    return VirtualBatch(mixed, y, y[perm], lam, perm)


def mixed_label(vb: VirtualBatch):
    w = vb.weights()
    return w * vb.labels_a + (1.0 - w) * vb.labels_b
