"""Losses, the gated adversarial training loop, checkpoints and metrics."""
from .checkpoint import Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint, \
    save_checkpoint
from .losses import batch_reconstruction_loss, disc_loss, gen_loss, reconstruction_loss, \
    update_gates
from .metrics import HEADER, MetricsWriter
from .state import MODES, GateState, LossReport, TrainConfig
from .trainer import BatchSampler, Trainer, pretrain, train_gan

__all__ = [
    "Checkpoint", "decode_checkpoint", "encode_checkpoint", "load_checkpoint",
    "save_checkpoint", "batch_reconstruction_loss", "disc_loss", "gen_loss",
    "reconstruction_loss", "update_gates", "HEADER", "MetricsWriter", "MODES", "GateState",
    "LossReport", "TrainConfig", "BatchSampler", "Trainer", "pretrain", "train_gan",
]
