"""Knowledge distillation by similarity transfer over mixup virtual samples.

Small float64 numpy networks with hand-written gradients, the distillation
losses, an SGD optimizer and multi-seed experiment tooling.
"""
from .checkpoint import load as load_checkpoint, save as save_checkpoint
from .config import ExperimentConfig, parse_config
from .data import Dataset, SyntheticSpec, batches, generate_synthetic, load_delimited, load_idx
from .experiment import run_experiment
from .losses import (KDHyper, LossBundle, cross_entropy, kd_softened_kl, mix_loss,
                     stkd_total_loss, vanilla_kd_loss)
from .mixup import LabeledBatch, MixPolicy, VirtualBatch, make_virtual_batch, mixed_label
from .nn import Affine, Network, ReLU, softmax
from .optim import SGD, StepSchedule
from .trainer import (RunReport, TrainPlan, distill_stkd, distill_vanilla_kd, export_penultimate,
                      train_teacher)

__version__ = "0.1.0"
