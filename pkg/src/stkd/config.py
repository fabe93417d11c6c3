"""Strict YAML experiment configs.

Every key is known in advance; anything else is an error naming its key
path.  :func:`echo` writes the config back with all defaults filled in, and
parsing that echo yields an identical structure.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass

import yaml

from .data import SYNTHETIC_KINDS
from .losses import KD_TERMS


class ConfigError(ValueError):
    pass


TRAINING_DEFAULTS = {
    "epochs": 50,
    "batch_size": 32,
    "lr": 0.05,
    "momentum": 0.9,
    "weight_decay": 1e-4,
    "nesterov": False,
    "milestones": [30, 40],
    "factor": 0.1,
}

# key -> default; a nested dict is a sub-section, REQUIRED marks mandatory keys
REQUIRED = object()

SCHEMA = {
    "dataset": {
        "source": "synthetic",
        "synthetic": {
            "kind": "gaussian_blobs",
            "class_count": 3,
            "samples_per_class": 500,
            "input_dim": 2,
            "noise_sigma": 0.15,
            "seed": 0,
        },
        "delimited": {
            "path": REQUIRED,
            "test_path": None,
            "label_column": 0,
            "delimiter": ",",
            "has_header": False,
            "class_count": None,
        },
        "idx": {
            "images": REQUIRED,
            "labels": REQUIRED,
            "test_images": None,
            "test_labels": None,
            "class_count": None,
        },
        "test_fraction": 1 / 3,
        "split_seed": 0,
        "horizontal_flip": 0.0,
    },
    "teacher": {"hidden": [64, 64], "training": {}},
    "student": {"hidden": [8]},
    "training": TRAINING_DEFAULTS,
    "methods": {
        "baseline": {"training": {}},
        "vanilla_kd": {
            "temperature": 4.0,
            "balance": 1.0,
            "t2_compensation": False,
            "training": {},
        },
        "stkd": {
            "mix_mode": "fixed",
            "lambda": 0.5,
            "alpha": 1.0,
            "per_batch": True,
            "kd_term": "kl",
            "lambda_sweep": [],
            "training": {},
        },
    },
    "seeds": [1, 2, 3, 4, 5],
    "output_dir": "runs",
    "workers": None,
}

# sections present in the schema that the user may omit entirely
_OPTIONAL_SECTIONS = {
    ("dataset", "synthetic"), ("dataset", "delimited"), ("dataset", "idx"),
    ("methods", "baseline"), ("methods", "vanilla_kd"), ("methods", "stkd"),
}
# sections whose keys are a partial override of "training"
_OVERRIDES = {("teacher", "training"), ("methods", "baseline", "training"),
              ("methods", "vanilla_kd", "training"), ("methods", "stkd", "training")}
_SOURCES = ("synthetic", "delimited", "idx")


def _path(parts):
    return ".".join(map(str, parts)) or "<root>"


def _merge(schema, given, parts, partial=False):
    """Fill defaults from ``schema`` into ``given``; reject unknown keys."""
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(f"{_path(parts)}: expected a mapping")
    for key in given:
        if key not in schema:
            raise ConfigError(f"unknown key {_path(parts + [str(key)])!r}")
    out = {}
    for key, default in schema.items():
        sub = parts + [key]
        if tuple(sub) in _OVERRIDES:
            out[key] = _merge(TRAINING_DEFAULTS, given.get(key), sub, partial=True)
        elif isinstance(default, dict):
            if tuple(sub) in _OPTIONAL_SECTIONS and key not in given:
                continue
            out[key] = _merge(default, given.get(key), sub)
        elif key in given:
            out[key] = copy.deepcopy(given[key])
        elif partial:
            continue
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {_path(sub)!r}")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _num(d, key, parts, lo=None, hi=None, integer=False, lo_open=False, hi_open=False):
    v = d[key]
    where = _path(parts + [key])
    if isinstance(v, str) and not integer:
        # YAML 1.1 reads exponent forms without a dot (1e-4) as strings
        try:
            v = float(v)
        except ValueError:
            pass
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    if integer and not isinstance(v, int):
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(f"{where}: {v} is below the allowed range")
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise ConfigError(f"{where}: {v} is above the allowed range")
    if not integer:
        d[key] = float(v)


def _bool(d, key, parts):
    if not isinstance(d[key], bool):
        raise ConfigError(f"{_path(parts + [key])}: expected true/false")


def _int_list(d, key, parts, min_value=None):
    v = d[key]
    where = _path(parts + [key])
    if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, int) for x in v):
        raise ConfigError(f"{where}: expected a list of integers")
    if min_value is not None and any(x < min_value for x in v):
        raise ConfigError(f"{where}: entries must be >= {min_value}")


def _paths(d, keys, parts):
    for k in keys:
        if d[k] is not None and (not isinstance(d[k], str) or not d[k]):
            raise ConfigError(f"{_path(parts + [k])}: expected a file path")


def _check_training(t, parts):
    if "epochs" in t:
        _num(t, "epochs", parts, lo=1, integer=True)
    if "batch_size" in t:
        _num(t, "batch_size", parts, lo=1, integer=True)
    if "lr" in t:
        _num(t, "lr", parts, lo=0, lo_open=True)
    if "momentum" in t:
        _num(t, "momentum", parts, lo=0, hi=1, hi_open=True)
    if "weight_decay" in t:
        _num(t, "weight_decay", parts, lo=0)
    if "nesterov" in t:
        _bool(t, "nesterov", parts)
    if "milestones" in t:
        _int_list(t, "milestones", parts, min_value=0)
        ms = t["milestones"]
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ConfigError(f"{_path(parts + ['milestones'])}: must be strictly increasing")
    if "factor" in t:
        _num(t, "factor", parts, lo=0, hi=1, lo_open=True, hi_open=True)


def _validate(c):
    ds = c["dataset"]
    if ds["source"] not in _SOURCES:
        raise ConfigError(f"dataset.source: must be one of {_SOURCES}")
    for other in _SOURCES:
        if other != ds["source"] and other in ds:
            raise ConfigError(f"dataset.{other}: section given but source is {ds['source']!r}")
    if ds["source"] not in ds:
        ds[ds["source"]] = _merge(SCHEMA["dataset"][ds["source"]], {}, ["dataset", ds["source"]])
        ds = c["dataset"] = {k: ds[k] for k in SCHEMA["dataset"] if k in ds}
    src = ds[ds["source"]]
    if ds["source"] == "synthetic":
        p = ["dataset", "synthetic"]
        if src["kind"] not in SYNTHETIC_KINDS:
            raise ConfigError(f"dataset.synthetic.kind: must be one of {SYNTHETIC_KINDS}")
        for k in ("class_count", "samples_per_class", "input_dim"):
            _num(src, k, p, lo=1, integer=True)
        _num(src, "noise_sigma", p, lo=0)
        _num(src, "seed", p, lo=0, integer=True)
    elif ds["source"] == "delimited":
        p = ["dataset", "delimited"]
        _paths(src, ("path", "test_path"), p)
        _num(src, "label_column", p, integer=True)
        _bool(src, "has_header", p)
        if not isinstance(src["delimiter"], str) or len(src["delimiter"]) != 1:
            raise ConfigError("dataset.delimited.delimiter: expected a single character")
        if src["class_count"] is not None:
            _num(src, "class_count", p, lo=1, integer=True)
    else:
        p = ["dataset", "idx"]
        _paths(src, ("images", "labels", "test_images", "test_labels"), p)
        if (src["test_images"] is None) != (src["test_labels"] is None):
            raise ConfigError("dataset.idx: test_images and test_labels go together")
        if src["class_count"] is not None:
            _num(src, "class_count", p, lo=1, integer=True)
    _num(ds, "test_fraction", ["dataset"], lo=0, hi=1, lo_open=True, hi_open=True)
    _num(ds, "split_seed", ["dataset"], lo=0, integer=True)
    _num(ds, "horizontal_flip", ["dataset"], lo=0, hi=1)

    for role in ("teacher", "student"):
        _int_list(c[role], "hidden", [role], min_value=1)
    _check_training(c["training"], ["training"])
    _check_training(c["teacher"]["training"], ["teacher", "training"])

    methods = c["methods"]
    if not methods:
        raise ConfigError("methods: at least one of baseline, vanilla_kd, stkd is required")
    for name, m in methods.items():
        _check_training(m["training"], ["methods", name, "training"])
    if "vanilla_kd" in methods:
        m, p = methods["vanilla_kd"], ["methods", "vanilla_kd"]
        _num(m, "temperature", p, lo=0, lo_open=True)
        _num(m, "balance", p, lo=0)
        _bool(m, "t2_compensation", p)
    if "stkd" in methods:
        m, p = methods["stkd"], ["methods", "stkd"]
        if m["mix_mode"] not in ("fixed", "sampled_beta"):
            raise ConfigError("methods.stkd.mix_mode: must be 'fixed' or 'sampled_beta'")
        _num(m, "lambda", p, lo=0, hi=1)
        _num(m, "alpha", p, lo=0, lo_open=True)
        _bool(m, "per_batch", p)
        if m["kd_term"] not in KD_TERMS:
            raise ConfigError(f"methods.stkd.kd_term: must be one of {KD_TERMS}")
        sweep = m["lambda_sweep"]
        if not isinstance(sweep, list):
            raise ConfigError("methods.stkd.lambda_sweep: expected a list")
        for i in range(len(sweep)):
            _num(sweep, i, p + ["lambda_sweep"], lo=0, hi=1)
        if len(set(sweep)) != len(sweep):
            raise ConfigError("methods.stkd.lambda_sweep: values must be distinct")

    seeds = c["seeds"]
    _int_list(c, "seeds", [], min_value=0)
    if not seeds:
        raise ConfigError("seeds: at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds: values must be distinct")
    if not isinstance(c["output_dir"], str) or not c["output_dir"]:
        raise ConfigError("output_dir: expected a path")
    if c["workers"] is not None:
        _num(c, "workers", [], lo=1, integer=True)


@dataclass
class ExperimentConfig:
    """Validated config tree with every default materialised."""

    tree: dict

    @property
    def seeds(self):
        return list(self.tree["seeds"])

    @property
    def methods(self):
        return list(self.tree["methods"])

    @property
    def output_dir(self):
        return self.tree["output_dir"]

    def training_for(self, role: str) -> dict:
        """Effective training settings for "teacher" or a method name."""
        if role == "teacher":
            return dict(self.tree["teacher"]["training"])
        return dict(self.tree["methods"][role]["training"])

    def checksum(self) -> str:
        """Digest of everything that influences results."""
        t = {k: v for k, v in self.tree.items() if k not in ("output_dir", "workers")}
        blob = json.dumps(t, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def resolve_paths(self, base_dir) -> "ExperimentConfig":
        """Make relative dataset and output paths relative to ``base_dir``."""
        tree = copy.deepcopy(self.tree)
        join = lambda p: p if p is None or os.path.isabs(p) else os.path.join(base_dir, p)
        ds = tree["dataset"]
        for key in ("path", "test_path"):
            if "delimited" in ds:
                ds["delimited"][key] = join(ds["delimited"][key])
        for key in ("images", "labels", "test_images", "test_labels"):
            if "idx" in ds:
                ds["idx"][key] = join(ds["idx"][key])
        tree["output_dir"] = join(tree["output_dir"])
        return ExperimentConfig(tree)


def from_dict(raw) -> ExperimentConfig:
    tree = _merge(SCHEMA, raw, [])
    _validate(tree)
    # overrides become complete training sections so the echo is self-contained
    for section in [tree["teacher"], *tree["methods"].values()]:
        section["training"] = copy.deepcopy({**tree["training"], **section["training"]})
    return ExperimentConfig(tree)


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else "?"
        raise ConfigError(f"syntax error at line {line}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    return from_dict(raw)


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        cfg = parse_config(f.read())
    return cfg.resolve_paths(os.path.dirname(os.path.abspath(path)))


def echo(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.tree, sort_keys=False, default_flow_style=None)
