"""Reconstruction, hinge and adversarial generator losses plus the gate rule."""
import numpy as np

from ..diffmath import ops
from ..errors import InputError
from .state import GateState


def reconstruction_loss(predicted, target):
    """Mean squared error over every entry of a ``(T, F)`` pair."""
    p = ops.lift(predicted)
    t = ops.lift(target)
    if p.shape != t.shape:
        raise InputError(f"prediction shape {p.shape} differs from target shape {t.shape}")
    return ops.mse(p, t)


def batch_reconstruction_loss(predicted, frames, lengths):
    """Per-utterance MSE over the valid ``T_b * F`` entries, averaged over the batch.

    ``predicted`` is a ``(B, T, F)`` Var; ``frames`` the zero-padded targets.
    """
    B, T, F = predicted.shape
    frames = np.asarray(frames)[:, :T]
    if frames.shape != (B, T, F):
        raise InputError(f"targets have shape {frames.shape}, expected {(B, T, F)}")
    lengths = np.minimum(np.asarray(lengths), T)
    if (lengths < 1).any():
        raise InputError("every utterance needs at least one frame")
    valid = np.arange(T)[None, :] < lengths[:, None]
    weights = valid[:, :, None] / (B * lengths[:, None, None] * F)
    weights = np.broadcast_to(weights, (B, T, F))
    return ops.weighted_sse(predicted, frames, weights)


def disc_loss(score_t, score_f):
    """Hinge loss ``relu(1 - s_t) + relu(1 + s_f)``, each term batch-averaged."""
    st = ops.lift(score_t)
    sf = ops.lift(score_f)
    real = ops.mean(ops.relu(ops.sub(1.0, st)))
    fake = ops.mean(ops.relu(ops.add(1.0, sf)))
    return ops.add(real, fake)


def gen_loss(l_t, score_t, score_f, alpha):
    """``L_T - alpha * (mean(s_f) - mean(s_t))``."""
    if alpha < 0:
        raise InputError(f"adversarial weight must be >= 0, got {alpha}")
    gap = ops.sub(ops.mean(ops.lift(score_f)), ops.mean(ops.lift(score_t)))
    return ops.sub(ops.lift(l_t), ops.scale(gap, alpha))


def update_gates(accuracy, r_low, r_high):
    """Strict-inequality gate rule: adversarial gradient above the band floor,
    discriminator updates below its ceiling."""
    if not 0.0 <= accuracy <= 1.0:
        raise InputError(f"accuracy {accuracy} outside [0, 1]")
    return GateState(s_g=accuracy > r_low, s_d=accuracy < r_high)
