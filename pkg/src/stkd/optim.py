from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StepSchedule:
    """Multiply the learning rate by ``factor`` at each milestone epoch (inclusive)."""

    initial_lr: float
    milestones: tuple = ()
    factor: float = 0.1

    def __post_init__(self):
        ms = tuple(int(m) for m in self.milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError(f"milestones must be strictly increasing: {ms}")
        if not 0 < self.factor < 1:
            raise ValueError("factor must lie in (0, 1)")
        if not self.initial_lr > 0:
            raise ValueError("initial learning rate must be positive")
        object.__setattr__(self, "milestones", ms)

    def lr_at(self, epoch: int) -> float:
        passed = bisect.bisect_right(self.milestones, epoch)
        return self.initial_lr * self.factor**passed


class SGD:
    """SGD with momentum and coupled weight decay.

    ``v <- momentum * v + grad + weight_decay * param``;
    ``param <- param - lr * v`` (or the Nesterov look-ahead variant).
    Parameters are updated in place.
    """

    def __init__(self, params, lr, momentum=0.0, weight_decay=0.0, nesterov=False):
        if not 0 <= momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if nesterov and momentum == 0:
            raise ValueError("nesterov momentum needs momentum > 0")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.nesterov = nesterov
        self.velocity = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        grads = list(grads)
        if len(grads) != len(self.params):
            raise ValueError(f"got {len(grads)} gradients for {len(self.params)} parameters")
        for i, (p, g, v) in enumerate(zip(self.params, grads, self.velocity)):
            if g.shape != p.shape:
                raise ValueError(f"parameter {i}: gradient shape {g.shape} != {p.shape}")
            d = g + self.weight_decay * p if self.weight_decay else g
            v *= self.momentum
            v += d
            if self.nesterov:
                p -= self.lr * (d + self.momentum * v)
            else:
                p -= self.lr * v
