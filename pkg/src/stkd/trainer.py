"""Training loops: plain cross-entropy, vanilla KD and mixup-based similarity transfer.

All randomness of a run is keyed on ``plan.seed``: batch order via
:func:`stkd.data.batches`, mixup pairing/coefficients and flips via
dedicated generators.  Re-running a plan reproduces every loss and
accuracy bit for bit.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset, batches, horizontal_flip
from .losses import KD_TERMS, KDHyper, cross_entropy, stkd_total_loss, vanilla_kd_loss
from .mixup import MixPolicy, make_virtual_batch
from .nn import Network
from .optim import SGD, StepSchedule

log = logging.getLogger(__name__)

METHODS = ("baseline", "vanilla_kd", "stkd")

# sub-stream tags for np.random.default_rng([seed, tag])
_MIX_STREAM = 1
_FLIP_STREAM = 2
TEACHER_INIT_STREAM = 10
STUDENT_INIT_STREAM = 11


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainPlan:
    method: str
    epochs: int = 50
    batch_size: int = 32
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    nesterov: bool = False
    milestones: tuple = ()
    factor: float = 0.1
    seed: int = 0
    mix: MixPolicy | None = None
    kd: KDHyper | None = None
    kd_term: str = "kl"
    flip_probability: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if (self.mix is not None) != (self.method == "stkd"):
            raise ValueError("a mix policy is required for stkd and only for stkd")
        if (self.kd is not None) != (self.method == "vanilla_kd"):
            raise ValueError("KD hyperparameters are required for vanilla_kd and only for vanilla_kd")
        if self.kd_term not in KD_TERMS:
            raise ValueError(f"unknown kd_term {self.kd_term!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    @property
    def schedule(self) -> StepSchedule:
        return StepSchedule(self.lr, tuple(self.milestones), self.factor)


@dataclass
class EpochMetric:
    epoch: int
    train_loss: float
    test_accuracy: float


@dataclass
class RunReport:
    method: str
    seed: int
    per_epoch: list = field(default_factory=list)
    final_test_accuracy: float = float("nan")
    param_checksum: str = ""
    wall_clock: float = 0.0

    def to_dict(self):
        return asdict(self)


def accuracy(net: Network, ds: Dataset) -> float:
    """Percent correct by plain argmax on un-augmented inputs."""
    pred = np.argmax(net(ds.inputs), axis=1)
    return 100.0 * int(np.sum(pred == ds.targets)) / len(ds)


def _fit(net, train, test, plan, method, step_loss):
    """Shared epoch/batch loop.  ``step_loss(batch)`` returns ``(LossBundle, trace)``,
    or ``None`` to skip the batch."""
    started = time.perf_counter()
    opt = SGD(net.parameters(), plan.lr, plan.momentum, plan.weight_decay, plan.nesterov)
    schedule = plan.schedule
    flip_rng = np.random.default_rng([plan.seed, _FLIP_STREAM])
    report = RunReport(method, plan.seed)
    test = train if test is None else test
    for epoch in range(plan.epochs):
        opt.lr = schedule.lr_at(epoch)
        total, seen = 0.0, 0
        for b, batch in enumerate(batches(train, plan.batch_size, plan.seed, epoch)):
            if plan.flip_probability > 0:
                batch = horizontal_flip(batch, plan.flip_probability, flip_rng, train.image_shape)
            out = step_loss(batch)
            if out is None:
                continue
            loss, trace = out
            if not np.isfinite(loss.value) or not np.all(np.isfinite(loss.grad)):
                raise TrainingDiverged(f"{method}: non-finite loss at epoch {epoch + 1}, batch {b}")
            _, grads = net.backward(trace, loss.grad)
            opt.step(grads)
            net.bump()
            if not all(np.all(np.isfinite(p)) for p in opt.params):
                raise TrainingDiverged(f"{method}: non-finite parameters at epoch {epoch + 1}, batch {b}")
            total += loss.value * len(batch)
            seen += len(batch)
        acc = accuracy(net, test)
        report.per_epoch.append(EpochMetric(epoch + 1, total / max(seen, 1), acc))
        log.debug("%s seed=%d epoch=%d loss=%.6f acc=%.2f", method, plan.seed, epoch + 1,
                  report.per_epoch[-1].train_loss, acc)
    report.final_test_accuracy = report.per_epoch[-1].test_accuracy
    report.param_checksum = net.checksum()
    report.wall_clock = time.perf_counter() - started
    return report


def train_teacher(net: Network, train: Dataset, plan: TrainPlan, test: Dataset | None = None,
                  method="teacher"):
    """Cross-entropy training on the original data.

    Used both for the teacher and for the student-alone baseline.
    """
    if plan.method != "baseline":
        raise ValueError("teacher/baseline training takes a baseline plan")

    def step(batch):
        trace = net.forward(batch.inputs)
        return cross_entropy(trace.logits, batch.labels), trace

    return net, _fit(net, train, test, plan, method, step)


def _check_pair(teacher: Network, student: Network, train: Dataset):
    if teacher.out_features != student.out_features:
        raise ValueError(
            f"class-count mismatch: teacher {teacher.out_features}, student {student.out_features}"
        )
    if teacher.in_features != student.in_features:
        raise ValueError("teacher and student disagree on input width")
    if student.out_features != train.class_count:
        raise ValueError("network output width does not match the dataset's class count")


def _frozen(teacher, run):
    before = teacher.checksum()
    result = run()
    if teacher.checksum() != before:
        raise RuntimeError("teacher parameters changed during distillation")
    return result


def distill_stkd(teacher: Network, student: Network, train: Dataset, plan: TrainPlan,
                 test: Dataset | None = None, method="stkd"):
    """Distil on mixup virtual batches with the mix loss plus teacher matching."""
    if plan.method != "stkd":
        raise ValueError("distill_stkd takes an stkd plan")
    _check_pair(teacher, student, train)
    mix_rng = np.random.default_rng([plan.seed, _MIX_STREAM])

    def step(batch):
        if len(batch) < 2:
            return None
        vb = make_virtual_batch(batch, plan.mix, mix_rng)
        t_logits = teacher(vb.inputs)
        trace = student.forward(vb.inputs)
        return stkd_total_loss(trace.logits, t_logits, vb, plan.kd_term), trace

    report = _frozen(teacher, lambda: _fit(student, train, test, plan, method, step))
    return student, report


def distill_vanilla_kd(teacher: Network, student: Network, train: Dataset, plan: TrainPlan,
                       test: Dataset | None = None, method="vanilla_kd"):
    """Temperature-softened KL to the teacher plus weighted cross-entropy."""
    if plan.method != "vanilla_kd":
        raise ValueError("distill_vanilla_kd takes a vanilla_kd plan")
    _check_pair(teacher, student, train)

    def step(batch):
        t_logits = teacher(batch.inputs)
        trace = student.forward(batch.inputs)
        return vanilla_kd_loss(trace.logits, t_logits, batch.labels, plan.kd), trace

    report = _frozen(teacher, lambda: _fit(student, train, test, plan, method, step))
    return student, report


def export_penultimate(net: Network, ds: Dataset, path) -> np.ndarray:
    """Write ``class, activations...`` rows for the input of the final affine layer."""
    if sum(l.kind == "affine" for l in net.layers) < 2:
        raise ValueError("penultimate export needs at least one hidden layer")
    acts = net.penultimate(ds.inputs)
    with open(path, "w") as f:
        for t, row in zip(ds.targets, acts):
            f.write(",".join([str(int(t)), *(repr(float(v)) for v in row)]) + "\n")
    return acts
