"""Dense float64 autodiff substrate: tape, primitives, optimizers, oracles."""
from . import ops
from .gradcheck import forward_backward, grad_check
from .optim import AdamState, LrSchedule, adam_step, clip_grad_norm, lr_at
from .tape import Param, ParamStore, Tape, Var, active_tape

__all__ = [
    "ops", "forward_backward", "grad_check", "AdamState", "LrSchedule", "adam_step",
    "clip_grad_norm", "lr_at", "Param", "ParamStore", "Tape", "Var", "active_tape",
]
