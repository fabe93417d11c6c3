"""Save a trained network, reload it, score it and export its hidden features.

    python3 demos/04_checkpoints_and_io.py [work_dir]
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from stkd import checkpoint
from stkd.data import (SyntheticSpec, generate_synthetic, load_delimited, load_idx,
                       train_test_split, write_delimited, write_idx)
from stkd.nn import Network
from stkd.trainer import TrainPlan, accuracy, export_penultimate, train_teacher

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="stkd-demo-"))
work.mkdir(parents=True, exist_ok=True)

data = generate_synthetic(SyntheticSpec("gaussian_blobs", 4, 100, 2, 0.2, seed=5))
train, test = train_test_split(data, 0.25, seed=0)

net = Network.mlp(2, [16, 6], 4, np.random.default_rng([0, 10]))
net, report = train_teacher(net, train, TrainPlan("baseline", epochs=15, seed=0), test)
print(f"trained: test accuracy {report.final_test_accuracy:.1f}, checksum {report.param_checksum[:12]}")

# Binary checkpoint: reload gives bit-identical parameters and predictions.
ckpt = work / "net.ckpt"
checkpoint.save(net, ckpt)
again = checkpoint.load(ckpt)
assert again.checksum() == net.checksum()
print(f"{ckpt.stat().st_size} byte checkpoint reloads to accuracy {accuracy(again, test):.1f}")

# Delimited text round-trips exactly because floats are written with repr().
write_delimited(test, work / "test.csv")
assert load_delimited(work / "test.csv").inputs.tobytes() == test.inputs.tobytes()

# Penultimate features: class index, then the 6 activations feeding the last layer.
acts = export_penultimate(again, test, work / "features.csv")
for k in range(4):
    print(f"class {k}: mean feature {np.round(acts[test.targets == k].mean(axis=0), 2)}")

# IDX images are read as pixel/255 with a (h, w, 1) image shape.
pixels = np.random.default_rng(1).integers(0, 256, size=(3, 4, 4), dtype=np.uint8)
write_idx(pixels, np.array([0, 1, 2], dtype=np.uint8), work / "img.idx", work / "lbl.idx")
imgs = load_idx(work / "img.idx", work / "lbl.idx")
print(f"IDX: {len(imgs)} images, shape {imgs.image_shape}, first row {imgs.inputs[0, :4]}")
print("files in", work)
