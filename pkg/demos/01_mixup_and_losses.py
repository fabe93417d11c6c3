"""Walk through one virtual batch and the losses computed on it.

    python3 demos/01_mixup_and_losses.py
"""
import numpy as np

from stkd.losses import cross_entropy, distill_term, kd_softened_kl, mix_loss, stkd_total_loss
from stkd.mixup import LabeledBatch, MixPolicy, make_virtual_batch, mixed_label
from stkd.nn import Network, softmax

np.set_printoptions(precision=3, suppress=True)
rng = np.random.default_rng(7)

# Four 2-D points from three classes.
x = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.9, 0.1]])
y = np.eye(3)[[0, 1, 2, 0]]
batch = LabeledBatch(x, y)

# Pair each sample with a shuffled partner from the same batch and blend.
vb = make_virtual_batch(batch, MixPolicy("fixed", fixed_lambda=0.7), rng)
print("partner of each row:", vb.partner)
print("mixed inputs:\n", vb.inputs)
print("mixed labels (0.7 * own + 0.3 * partner):\n", mixed_label(vb))

# Coefficients drawn from Beta(alpha, alpha): small alpha pushes them to 0 or 1.
for alpha in (0.2, 1.0, 5.0):
    lams = [make_virtual_batch(batch, MixPolicy("sampled_beta", alpha), rng).lam for _ in range(2000)]
    print(f"alpha={alpha}: mean lambda {np.mean(lams):.3f}, share outside [0.1, 0.9] "
          f"{np.mean([(l < 0.1) | (l > 0.9) for l in lams]):.2f}")

# A random teacher and a smaller student looking at the same virtual batch.
teacher = Network.mlp(2, [16, 16], 3, rng)
student = Network.mlp(2, [4], 3, rng)
t_logits, s_logits = teacher(vb.inputs), student(vb.inputs)
print("teacher probabilities:\n", softmax(t_logits))

print("cross-entropy on original labels  ", cross_entropy(student(x), y).value)
print("mix loss on the virtual batch     ", mix_loss(s_logits, vb).value)
print("teacher matching (KL, t=1)        ", distill_term(s_logits, t_logits).value)
print("total loss used for distillation  ", stkd_total_loss(s_logits, t_logits, vb).value)

# Raising the temperature flattens both distributions and shrinks the KL.
for t in (1, 4, 20, 1000):
    print(f"softened KL at t={t:<4}", kd_softened_kl(s_logits, t_logits, t).value)
