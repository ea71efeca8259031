"""Adam, global-norm clipping and the exponential learning-rate schedule."""
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, NumericFailure


@dataclass
class LrSchedule:
    lr0: float = 1e-3
    lr_final: float = 1e-5
    decay_steps: int = 50_000

    def __post_init__(self):
        if self.lr0 <= 0 or self.lr_final <= 0 or self.decay_steps < 1:
            raise ConfigError(f"invalid learning-rate schedule {self}")


def lr_at(schedule, step):
    """Geometric interpolation from ``lr0`` to ``lr_final``, constant afterwards."""
    frac = min(step, schedule.decay_steps) / schedule.decay_steps
    if frac >= 1.0:
        return schedule.lr_final
    return schedule.lr0 * (schedule.lr_final / schedule.lr0) ** frac


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, **kw):
        st = cls(**kw)
        for p in params.trainable():
            st.m[p.name] = np.zeros_like(p.value)
            st.v[p.name] = np.zeros_like(p.value)
        return st


def adam_step(params, state, lr):
    """Bias-corrected Adam update of every trainable param; grads are zeroed."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    trainable = params.trainable()
    for p in trainable:
        if p.name not in state.m or state.m[p.name].shape != p.value.shape \
                or state.v[p.name].shape != p.value.shape:
            raise ConfigError(f"optimizer moments do not match parameter {p.name!r}")
        if not np.isfinite(p.grad).all():
            raise NumericFailure(f"grad:{p.name}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p in trainable:
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        v += (1.0 - b2) * p.grad * p.grad
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad[...] = 0.0


def clip_grad_norm(params, max_norm):
    """Rescale all trainable grads so their joint L2 norm is at most ``max_norm``."""
    total = np.sqrt(sum(float((p.grad * p.grad).sum()) for p in params.trainable()))
    if total > max_norm > 0:
        k = max_norm / total
        for p in params.trainable():
            p.grad *= k
    return total
