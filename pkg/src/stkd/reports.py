"""Line-delimited JSON report records and their schema."""
from __future__ import annotations

import json
import threading

import jsonschema

WALL_CLOCK_FIELDS = ("wallClock",)

_num = {"type": "number"}
_acc = {"type": "number", "minimum": 0, "maximum": 100}
_seed = {"type": "integer", "minimum": 0}
_sha = {"type": "string", "pattern": "^[0-9a-f]{64}$"}


def _record(event, props, required):
    return {
        "type": "object",
        "properties": {"event": {"const": event}, "method": {"type": "string"}, **props},
        "required": ["event", "method", *required],
        "additionalProperties": False,
    }


RECORD_SCHEMA = {
    "oneOf": [
        _record("run-start", {"seed": _seed, "role": {"enum": ["teacher", "student"]},
                              "configChecksum": _sha},
                ["seed", "role", "configChecksum"]),
        _record("epoch-metric", {"seed": _seed, "epoch": {"type": "integer", "minimum": 1},
                                 "trainLoss": _num, "testAccuracy": _acc},
                ["seed", "epoch", "trainLoss", "testAccuracy"]),
        _record("run-end", {"seed": _seed, "finalTestAccuracy": _acc, "paramChecksum": _sha,
                            "teacherChecksum": {"oneOf": [_sha, {"type": "null"}]},
                            "wallClock": {"type": "number", "minimum": 0}},
                ["seed", "finalTestAccuracy", "paramChecksum", "teacherChecksum", "wallClock"]),
        _record("run-failed", {"seed": _seed, "error": {"type": "string"}}, ["seed", "error"]),
        _record("aggregate", {
            "seeds": {"type": "array", "items": _seed},
            "failedSeeds": {"type": "array", "items": _seed},
            "medianAccuracy": _acc,
            "meanAccuracy": _acc,
            "perSeedAccuracies": {"type": "array", "items": _acc},
            "configChecksum": _sha,
            "mixPolicy": {
                "type": "object",
                "properties": {"mode": {"enum": ["fixed", "sampled_beta"]},
                               "lambda": _num, "alpha": _num, "perBatch": {"type": "boolean"}},
                "required": ["mode", "lambda", "alpha", "perBatch"],
                "additionalProperties": False,
            },
        }, ["seeds", "failedSeeds", "medianAccuracy", "meanAccuracy", "perSeedAccuracies",
            "configChecksum"]),
    ]
}


_VALIDATOR = jsonschema.Draft202012Validator(RECORD_SCHEMA)


def validate_record(record: dict) -> None:
    _VALIDATOR.validate(record)


def run_records(method, role, report, config_checksum, teacher_checksum=None):
    """All records for one finished run, in emission order."""
    yield {"event": "run-start", "method": method, "seed": report.seed, "role": role,
           "configChecksum": config_checksum}
    for m in report.per_epoch:
        yield {"event": "epoch-metric", "method": method, "seed": report.seed, "epoch": m.epoch,
               "trainLoss": m.train_loss, "testAccuracy": m.test_accuracy}
    yield {"event": "run-end", "method": method, "seed": report.seed,
           "finalTestAccuracy": report.final_test_accuracy, "paramChecksum": report.param_checksum,
           "teacherChecksum": teacher_checksum, "wallClock": report.wall_clock}


def strip_wall_clock(record: dict) -> dict:
    return {k: v for k, v in record.items() if k not in WALL_CLOCK_FIELDS}


class ReportWriter:
    """Append-only JSONL writer; safe to share between threads."""

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()
        self._f = open(path, "w")

    def write(self, record: dict) -> None:
        validate_record(record)
        line = json.dumps(record, allow_nan=False)
        with self._lock:
            self._f.write(line + "\n")
            self._f.flush()

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_records(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def validate_report_file(path) -> int:
    """Validate every line of a report file; returns the record count."""
    n = 0
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                validate_record(json.loads(line))
            except (ValueError, jsonschema.ValidationError) as exc:
                raise ValueError(f"{path}:{lineno}: invalid record: {exc}") from None
            n += 1
    return n
