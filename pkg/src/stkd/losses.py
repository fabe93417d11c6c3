"""Classification and distillation objectives with gradients w.r.t. student logits.

Every term is averaged over the batch.  Teacher logits are constants: no
gradient is ever returned for them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixup import VirtualBatch
from .nn import log_softmax, softmax


@dataclass(frozen=True)
class LossBundle:
    value: float
    grad: np.ndarray

    def __add__(self, other: "LossBundle") -> "LossBundle":
        return LossBundle(self.value + other.value, self.grad + other.grad)

    def scale(self, k: float) -> "LossBundle":
        return LossBundle(k * self.value, k * self.grad)


@dataclass(frozen=True)
class KDHyper:
    temperature: float = 4.0
    balance: float = 1.0
    # multiply the softened KL by t**2 (keeps gradient scale comparable across t); off by default
    t2_compensation: bool = False

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not self.balance >= 0:
            raise ValueError("balance weight must be non-negative")


def _as_logits(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"logits must be (batch, classes), got {z.shape}")
    return z


def _check_distribution(target, shape):
    target = np.asarray(target, dtype=np.float64)
    if target.shape != shape:
        raise ValueError(f"target shape {target.shape} != logits shape {shape}")
    if (target < 0).any() or not np.allclose(target.sum(axis=1), 1.0, rtol=0, atol=1e-9):
        raise ValueError("target rows must be probability distributions")
    return target


def cross_entropy(logits, target) -> LossBundle:
    z = _as_logits(logits)
    target = _check_distribution(target, z.shape)
    n = len(z)
    value = -float(np.sum(target * log_softmax(z))) / n
    return LossBundle(max(value, 0.0), (softmax(z) - target) / n)


def _kl_rows(log_p, log_q):
    p = np.exp(log_p)
    return np.sum(p * (log_p - log_q), axis=1)


def kd_softened_kl(student_logits, teacher_logits, temperature: float, t2_compensation=False) -> LossBundle:
    """Mean KL(softmax(teacher / t) || softmax(student / t))."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    s = _as_logits(student_logits)
    t = _as_logits(teacher_logits)
    if s.shape != t.shape:
        raise ValueError(f"student {s.shape} and teacher {t.shape} logits differ in shape")
    n = len(s)
    log_p = log_softmax(t / temperature)
    log_q = log_softmax(s / temperature)
    value = max(float(_kl_rows(log_p, log_q).sum()) / n, 0.0)
    grad = (np.exp(log_q) - np.exp(log_p)) / (temperature * n)
    out = LossBundle(value, grad)
    return out.scale(temperature**2) if t2_compensation else out


def vanilla_kd_loss(student_logits, teacher_logits, one_hot, hyper: KDHyper) -> LossBundle:
    kd = kd_softened_kl(student_logits, teacher_logits, hyper.temperature, hyper.t2_compensation)
    return kd + cross_entropy(student_logits, one_hot).scale(hyper.balance)


def mix_loss(student_logits, vb: VirtualBatch) -> LossBundle:
    """lam * H(student, labels_a) + (1 - lam) * H(student, labels_b)."""
    z = _as_logits(student_logits)
    a = _check_distribution(vb.labels_a, z.shape)
    b = _check_distribution(vb.labels_b, z.shape)
    n = len(z)
    w = vb.weights()
    log_q = log_softmax(z)
    ce_a = -np.sum(a * log_q, axis=1)
    ce_b = -np.sum(b * log_q, axis=1)
    lam = np.broadcast_to(np.asarray(vb.lam, dtype=np.float64), (n,))
    value = float(np.sum(lam * ce_a + (1.0 - lam) * ce_b)) / n
    grad = (np.exp(log_q) - (w * a + (1.0 - w) * b)) / n
    return LossBundle(max(value, 0.0), grad)


KD_TERMS = ("kl", "ce", "mse")


def distill_term(student_logits, teacher_logits, kind="kl") -> LossBundle:
    """Untempered distillation term between student and teacher outputs."""
    s = _as_logits(student_logits)
    t = _as_logits(teacher_logits)
    if s.shape != t.shape:
        raise ValueError(f"student {s.shape} and teacher {t.shape} logits differ in shape")
    if kind == "kl":
        return kd_softened_kl(s, t, 1.0)
    if kind == "ce":
        return cross_entropy(s, softmax(t))
    if kind == "mse":
        n = len(s)
        d = s - t
        return LossBundle(float(np.sum(d * d)) / n, 2.0 * d / n)
    raise ValueError(f"unknown distillation term {kind!r}; choose from {KD_TERMS}")


def stkd_total_loss(student_logits, teacher_logits, vb: VirtualBatch, kd_term="kl") -> LossBundle:
    """Mix loss on the virtual batch plus the teacher-matching term.

    Both logit arrays must come from ``vb.inputs``.
    """
    return mix_loss(student_logits, vb) + distill_term(student_logits, teacher_logits, kd_term)
