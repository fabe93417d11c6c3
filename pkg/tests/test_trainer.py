import numpy as np
import pytest

from stkd import losses, trainer
from stkd.data import Dataset, SyntheticSpec, generate_synthetic, load_delimited, train_test_split
from stkd.losses import KDHyper
from stkd.mixup import MixPolicy
from stkd.nn import Affine, Network
from stkd.trainer import (TrainPlan, TrainingDiverged, accuracy, distill_stkd, distill_vanilla_kd,
                          export_penultimate, train_teacher)

from test_data import nearest_centroid_accuracy

FAST = dict(epochs=3, batch_size=16, lr=0.05, momentum=0.9, weight_decay=1e-4)


def blobs(sigma=0.0, per_class=20, seed=0):
    return generate_synthetic(SyntheticSpec("gaussian_blobs", 3, per_class, 2, sigma, seed))


def mlp(hidden, seed, k=3):
    return Network.mlp(2, hidden, k, np.random.default_rng(seed))


def test_teacher_fits_separable_blobs():
    ds = blobs()
    net, report = train_teacher(mlp([16], 0), ds, TrainPlan("baseline", epochs=20, batch_size=8, lr=0.05,
                                                            momentum=0.9, seed=1))
    assert accuracy(net, ds) == 100.0
    assert [m.epoch for m in report.per_epoch] == list(range(1, 21))


def test_training_loss_drops():
    ds = blobs(per_class=50)
    _, r = train_teacher(mlp([8], 0), ds, TrainPlan("baseline", epochs=10, batch_size=32, lr=0.01,
                                                    momentum=0.0, seed=2))
    assert r.per_epoch[9].train_loss < r.per_epoch[0].train_loss


def test_teacher_training_is_bit_reproducible():
    ds = blobs(0.2)
    plan = TrainPlan("baseline", seed=4, **FAST)
    a, ra = train_teacher(mlp([8, 8], 0), ds, plan)
    b, rb = train_teacher(mlp([8, 8], 0), ds, plan)
    assert a.checksum() == b.checksum()
    assert [(m.train_loss, m.test_accuracy) for m in ra.per_epoch] == \
           [(m.train_loss, m.test_accuracy) for m in rb.per_epoch]


def test_reference_teacher_reaches_95_percent():
    ds = generate_synthetic(SyntheticSpec("gaussian_blobs", 3, 500, 2, 0.15, 0))
    train, test = train_test_split(ds, 1 / 3, 0)
    assert nearest_centroid_accuracy(test) >= 0.95  # the bar the MLP must meet
    plan = TrainPlan("baseline", epochs=50, batch_size=32, lr=0.05, momentum=0.9, weight_decay=1e-4,
                     milestones=(30, 40), seed=1)
    _, r = train_teacher(mlp([64, 64], 1), train, plan, test)
    assert r.final_test_accuracy >= 95.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_location():
    ds = blobs(0.1)
    plan = TrainPlan("baseline", epochs=2, batch_size=8, lr=1e200, momentum=0.0, weight_decay=0.0, seed=0)
    with pytest.raises(TrainingDiverged, match=r"epoch 1, batch \d+"):
        train_teacher(mlp([8], 0), ds, plan)


def test_plan_validation():
    with pytest.raises(ValueError):
        TrainPlan("stkd")
    with pytest.raises(ValueError):
        TrainPlan("baseline", mix=MixPolicy())
    with pytest.raises(ValueError):
        TrainPlan("vanilla_kd")
    with pytest.raises(ValueError):
        TrainPlan("fitnets")
    with pytest.raises(ValueError):
        train_teacher(mlp([4], 0), blobs(), TrainPlan("vanilla_kd", kd=KDHyper()))


def test_distillation_rejects_class_mismatch():
    ds = blobs()
    with pytest.raises(ValueError, match="class-count"):
        distill_stkd(mlp([4], 0, k=3), mlp([4], 1, k=4), ds,
                     TrainPlan("stkd", mix=MixPolicy("fixed"), **FAST))


def test_stkd_leaves_teacher_untouched():
    ds = blobs(0.2)
    teacher, _ = train_teacher(mlp([16], 0), ds, TrainPlan("baseline", seed=0, **FAST))
    before = teacher.checksum()
    student, _ = distill_stkd(teacher, mlp([4], 1), ds,
                              TrainPlan("stkd", mix=MixPolicy("sampled_beta", alpha=0.4), seed=0, **FAST))
    assert teacher.checksum() == before
    distill_vanilla_kd(teacher, mlp([4], 1), ds, TrainPlan("vanilla_kd", kd=KDHyper(), seed=0, **FAST))
    assert teacher.checksum() == before


def spy(monkeypatch, name):
    calls = []
    real = getattr(trainer, name)

    def wrapper(*args, **kw):
        out = real(*args, **kw)
        calls.append((args, kw, out))
        return out

    monkeypatch.setattr(trainer, name, wrapper)
    return calls


def test_stkd_lambda_one_uses_plain_labels_and_teacher_on_mixed(monkeypatch):
    ds = blobs(0.2)
    calls = spy(monkeypatch, "stkd_total_loss")
    teacher = mlp([8], 0)
    distill_stkd(teacher, mlp([4], 1), ds, TrainPlan("stkd", mix=MixPolicy("fixed", fixed_lambda=1.0),
                                                     seed=0, **FAST))
    (s_logits, t_logits, vb, _), _, out = calls[0]
    mix = losses.mix_loss(s_logits, vb)
    assert abs(mix.value - losses.cross_entropy(s_logits, vb.labels_a).value) <= 1e-15
    np.testing.assert_array_equal(t_logits, teacher(vb.inputs))
    assert out.value > mix.value  # the teacher term is still active


def test_identical_teacher_and_student_start_with_zero_kd(monkeypatch):
    ds = blobs(0.2)
    kd_calls = spy(monkeypatch, "stkd_total_loss")
    teacher = mlp([8], 5)
    distill_stkd(teacher, mlp([8], 5), ds, TrainPlan("stkd", mix=MixPolicy("fixed", fixed_lambda=1.0),
                                                     seed=0, **FAST))
    (s_logits, t_logits, vb, _), _, out = kd_calls[0]
    assert losses.distill_term(s_logits, t_logits).value == 0.0
    assert out.value == losses.mix_loss(s_logits, vb).value


def test_vanilla_kd_copy_of_teacher_has_zero_first_loss(monkeypatch):
    ds = blobs(0.2)
    calls = spy(monkeypatch, "vanilla_kd_loss")
    teacher = mlp([8], 5)
    distill_vanilla_kd(teacher, teacher.copy(), ds,
                       TrainPlan("vanilla_kd", kd=KDHyper(1.0, 0.0), seed=0, **FAST))
    assert calls[0][2].value == 0.0


def test_stkd_skips_single_sample_batch():
    ds = blobs(0.2, per_class=11)  # 33 samples, batch 16 -> last batch of 1
    _, r = distill_stkd(mlp([8], 0), mlp([4], 1), ds,
                        TrainPlan("stkd", mix=MixPolicy("fixed"), seed=0, **FAST))
    assert len(r.per_epoch) == FAST["epochs"]


def test_distillation_reports_reproduce():
    ds = blobs(0.3, per_class=30)
    teacher, _ = train_teacher(mlp([16], 0), ds, TrainPlan("baseline", seed=0, **FAST))
    plan = TrainPlan("stkd", mix=MixPolicy("sampled_beta", per_batch=False), seed=9, **FAST)
    runs = [distill_stkd(teacher, mlp([4], 1), ds, plan)[1] for _ in range(2)]
    strip = lambda r: {**r.to_dict(), "wall_clock": None}
    assert strip(runs[0]) == strip(runs[1])


def test_accuracy_ties_go_to_lowest_class():
    net = Network([Affine(np.zeros((3, 2)), np.zeros(3))])
    ds = Dataset.from_indices(np.ones((4, 2)), [0, 1, 2, 0], 3)
    assert accuracy(net, ds) == 50.0


def test_export_penultimate(tmp_path):
    ds = blobs(0.2, per_class=4).subset(np.arange(10))
    net = Network.mlp(2, [4], 3, np.random.default_rng(0))
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    acts = export_penultimate(net, ds, p1)
    export_penultimate(net, ds, p2)
    rows = [line.split(",") for line in p1.read_text().splitlines()]
    assert len(rows) == 10 and all(len(r) == 5 for r in rows)
    assert [int(r[0]) for r in rows] == ds.targets.tolist()
    back = load_delimited(p1, class_count=3)
    assert back.inputs.tobytes() == acts.tobytes()
    assert p1.read_bytes() == p2.read_bytes()
    with pytest.raises(ValueError):
        export_penultimate(Network.mlp(2, [], 3, np.random.default_rng(0)), ds, tmp_path / "c.csv")
