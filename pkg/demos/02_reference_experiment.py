"""Run the reference experiment (three methods over five seeds) and read its report.

    python3 demos/02_reference_experiment.py [output_dir]

Takes about ten seconds on one core.  The same run is available as
``stkd run configs/reference.yaml``.
"""
import sys
from pathlib import Path

from stkd.config import load_config
from stkd.experiment import run_experiment
from stkd.reports import read_records

root = Path(__file__).resolve().parent.parent
cfg = load_config(root / "configs" / "reference.yaml")
out = Path(sys.argv[1]) if len(sys.argv) > 1 else root / "runs" / "demo-reference"

result = run_experiment(cfg, out_dir=str(out))

print(f"{'method':<12}{'median':>8}{'mean':>8}   per seed")
for agg in result.aggregates:
    accs = " ".join(f"{a:5.1f}" for a in agg["perSeedAccuracies"])
    print(f"{agg['method']:<12}{agg['medianAccuracy']:8.2f}{agg['meanAccuracy']:8.2f}   {accs}")

# Every student distilled from a teacher records that teacher's checksum;
# it matches the teacher's own final checksum because teachers stay frozen.
records = read_records(out / "report.jsonl")
teachers = {r["seed"]: r["paramChecksum"] for r in records
            if r["event"] == "run-end" and r["method"] == "teacher"}
for r in records:
    if r["event"] == "run-end" and r["teacherChecksum"]:
        assert r["teacherChecksum"] == teachers[r["seed"]]

# Learning curve of the seed-1 STKD student.
curve = [r for r in records if r["event"] == "epoch-metric" and r["method"] == "stkd" and r["seed"] == 1]
for r in curve[::10] + curve[-1:]:
    print(f"epoch {r['epoch']:>2}  loss {r['trainLoss']:.4f}  test acc {r['testAccuracy']:.1f}")
print("wrote", out)
