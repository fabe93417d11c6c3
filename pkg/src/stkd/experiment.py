"""Multi-seed experiments: one teacher per seed, shared by every student method.

Each seed is an independent task (teacher, then each configured student
method) and may run in a worker process.  Records are written by the parent
in seed order, so report content does not depend on the worker count.
"""
from __future__ import annotations

import logging
import os
import statistics
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from .config import ExperimentConfig, echo
from .data import (Dataset, SyntheticSpec, generate_synthetic, load_delimited, load_idx,
                   train_test_split, write_delimited)
from .losses import KDHyper
from .mixup import MixPolicy
from .nn import Network
from .reports import ReportWriter, run_records
from .trainer import (STUDENT_INIT_STREAM, TEACHER_INIT_STREAM, TrainPlan, distill_stkd,
                      distill_vanilla_kd, train_teacher)

log = logging.getLogger(__name__)

WORKERS_ENV = "STKD_WORKERS"
MIN_COMPLETED = 3


class ExperimentFailed(RuntimeError):
    pass


@dataclass
class RunOutcome:
    method: str
    seed: int
    role: str
    report: object = None  # RunReport when the run completed
    error: str | None = None
    teacher_checksum: str | None = None


@dataclass
class ExperimentResult:
    aggregates: list = field(default_factory=list)
    runs: list = field(default_factory=list)

    def aggregate(self, method):
        return next(a for a in self.aggregates if a["method"] == method)


def load_datasets(cfg: ExperimentConfig):
    d = cfg.tree["dataset"]
    src = d[d["source"]]
    test = None
    if d["source"] == "synthetic":
        ds = generate_synthetic(SyntheticSpec(**src))
    elif d["source"] == "delimited":
        kw = dict(label_column=src["label_column"], delimiter=src["delimiter"],
                  has_header=src["has_header"], class_count=src["class_count"])
        ds = load_delimited(src["path"], **kw)
        if src["test_path"]:
            test = load_delimited(src["test_path"], **kw)
    else:
        ds = load_idx(src["images"], src["labels"], src["class_count"])
        if src["test_images"]:
            test = load_idx(src["test_images"], src["test_labels"], src["class_count"])
    if test is None:
        train, test = train_test_split(ds, d["test_fraction"], d["split_seed"])
    else:
        train = ds
        if test.dim != train.dim:
            raise ValueError("train and test inputs differ in width")
        if test.class_count != train.class_count:
            # test split may lack the highest classes; widen to the training count
            k = max(test.class_count, train.class_count)
            train = Dataset.from_indices(train.inputs, train.targets, k, train.image_shape)
            test = Dataset.from_indices(test.inputs, test.targets, k, test.image_shape)
    if d["horizontal_flip"] > 0 and train.image_shape is None:
        raise ValueError("dataset.horizontal_flip needs image data (idx source)")
    return train, test


def student_methods(cfg: ExperimentConfig):
    """(label, method name, extra TrainPlan kwargs) for every configured student run."""
    out = []
    methods = cfg.tree["methods"]
    if "baseline" in methods:
        out.append(("baseline", "baseline", {}))
    if "vanilla_kd" in methods:
        m = methods["vanilla_kd"]
        kd = KDHyper(m["temperature"], m["balance"], m["t2_compensation"])
        out.append(("vanilla_kd", "vanilla_kd", {"kd": kd}))
    if "stkd" in methods:
        m = methods["stkd"]
        if m["lambda_sweep"]:
            for lam in m["lambda_sweep"]:
                mix = MixPolicy("fixed", m["alpha"], lam, m["per_batch"])
                out.append((f"stkd[lambda={lam}]", "stkd", {"mix": mix, "kd_term": m["kd_term"]}))
        else:
            mix = MixPolicy(m["mix_mode"], m["alpha"], m["lambda"], m["per_batch"])
            out.append(("stkd", "stkd", {"mix": mix, "kd_term": m["kd_term"]}))
    return out


def make_plan(cfg: ExperimentConfig, role: str, method: str, seed: int, **extra) -> TrainPlan:
    t = cfg.training_for(role)
    return TrainPlan(
        method=method, epochs=t["epochs"], batch_size=t["batch_size"], lr=t["lr"],
        momentum=t["momentum"], weight_decay=t["weight_decay"], nesterov=t["nesterov"],
        milestones=tuple(t["milestones"]), factor=t["factor"], seed=seed,
        flip_probability=cfg.tree["dataset"]["horizontal_flip"], **extra,
    )


def checkpoint_name(label: str, seed: int) -> str:
    role = label.replace("[lambda=", "-lambda").replace("]", "")
    return f"{role}-{seed}.ckpt"


def _error(exc):
    log.debug("run failed:\n%s", traceback.format_exc())
    return f"{type(exc).__name__}: {exc}"


def run_seed(cfg: ExperimentConfig, seed: int, train, test, out_dir=None):
    """Teacher plus every student method for one seed."""
    outcomes = []
    d, k = train.dim, train.class_count
    students = student_methods(cfg)
    teacher = None
    if any(method != "baseline" for _, method, _ in students):
        try:
            net = Network.mlp(d, cfg.tree["teacher"]["hidden"], k,
                              np.random.default_rng([seed, TEACHER_INIT_STREAM]))
            teacher, report = train_teacher(net, train, make_plan(cfg, "teacher", "baseline", seed),
                                            test, method="teacher")
            outcomes.append(RunOutcome("teacher", seed, "teacher", report))
            if out_dir:
                checkpoint.save(teacher, os.path.join(out_dir, checkpoint_name("teacher", seed)))
        except Exception as exc:
            teacher = None
            outcomes.append(RunOutcome("teacher", seed, "teacher", error=_error(exc)))

    for label, method, extra in students:
        try:
            student = Network.mlp(d, cfg.tree["student"]["hidden"], k,
                                  np.random.default_rng([seed, STUDENT_INIT_STREAM]))
            plan = make_plan(cfg, method, method, seed, **extra)
            if method == "baseline":
                student, report = train_teacher(student, train, plan, test, method=label)
                tsum = None
            else:
                if teacher is None:
                    raise ExperimentFailed("teacher training failed for this seed")
                fn = distill_stkd if method == "stkd" else distill_vanilla_kd
                student, report = fn(teacher, student, train, plan, test, method=label)
                tsum = teacher.checksum()
            outcomes.append(RunOutcome(label, seed, "student", report, teacher_checksum=tsum))
            if out_dir:
                checkpoint.save(student, os.path.join(out_dir, checkpoint_name(label, seed)))
        except Exception as exc:
            outcomes.append(RunOutcome(label, seed, "student", error=_error(exc)))
    return outcomes


def _mix_record(cfg, label):
    if not label.startswith("stkd"):
        return None
    m = cfg.tree["methods"]["stkd"]
    if m["lambda_sweep"]:
        lam = float(label[len("stkd[lambda="):-1])
        return {"mode": "fixed", "lambda": lam, "alpha": m["alpha"], "perBatch": m["per_batch"]}
    return {"mode": m["mix_mode"], "lambda": m["lambda"], "alpha": m["alpha"],
            "perBatch": m["per_batch"]}


def aggregate(cfg: ExperimentConfig, outcomes):
    """Median/mean final accuracy per method, in first-seen method order."""
    labels = list(dict.fromkeys(o.method for o in outcomes))
    need = min(MIN_COMPLETED, len(cfg.seeds))
    records = []
    for label in labels:
        done = [o for o in outcomes if o.method == label and o.report is not None]
        failed = [o.seed for o in outcomes if o.method == label and o.report is None]
        if len(done) < need:
            raise ExperimentFailed(
                f"{label}: only {len(done)} of {len(cfg.seeds)} runs completed (need {need})"
            )
        accs = [o.report.final_test_accuracy for o in done]
        rec = {
            "event": "aggregate", "method": label,
            "seeds": [o.seed for o in done], "failedSeeds": failed,
            "medianAccuracy": statistics.median(accs), "meanAccuracy": statistics.fmean(accs),
            "perSeedAccuracies": accs, "configChecksum": cfg.checksum(),
        }
        mix = _mix_record(cfg, label)
        if mix is not None:
            rec["mixPolicy"] = mix
        records.append(rec)
    return records


def resolve_workers(cfg: ExperimentConfig, workers=None) -> int:
    if workers is None:
        workers = cfg.tree["workers"]
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, int(workers))


def run_experiment(cfg: ExperimentConfig, workers=None, out_dir=None) -> ExperimentResult:
    """Run every method over every seed and aggregate final test accuracy.

    With ``out_dir`` (default: the config's ``output_dir``; pass ``False`` to
    write nothing) the echoed config, the train/test splits, one checkpoint
    per run and ``report.jsonl`` are written there.
    """
    if out_dir is None:
        out_dir = cfg.output_dir
    train, test = load_datasets(cfg)
    writer = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.yaml"), "w") as f:
            f.write(echo(cfg))
        write_delimited(train, os.path.join(out_dir, "train.csv"))
        write_delimited(test, os.path.join(out_dir, "test.csv"))
        writer = ReportWriter(os.path.join(out_dir, "report.jsonl"))

    workers = resolve_workers(cfg, workers)
    checksum = cfg.checksum()
    result = ExperimentResult()
    try:
        if workers > 1 and len(cfg.seeds) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(cfg.seeds))) as pool:
                per_seed = pool.map(run_seed, *zip(*[(cfg, s, train, test, out_dir or None)
                                                     for s in cfg.seeds]))
                per_seed = list(per_seed)
        else:
            per_seed = [run_seed(cfg, s, train, test, out_dir or None) for s in cfg.seeds]
        for outcomes in per_seed:
            for o in outcomes:
                result.runs.append(o)
                if writer is None:
                    continue
                if o.report is None:
                    writer.write({"event": "run-failed", "method": o.method, "seed": o.seed,
                                  "error": o.error})
                else:
                    for rec in run_records(o.method, o.role, o.report, checksum, o.teacher_checksum):
                        writer.write(rec)
        result.aggregates = aggregate(cfg, result.runs)
        if writer is not None:
            for rec in result.aggregates:
                writer.write(rec)
    finally:
        if writer is not None:
            writer.close()
    return result
