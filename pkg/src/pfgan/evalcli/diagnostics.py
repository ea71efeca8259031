"""Attention-alignment health checks: monotonicity, entropy and garbling."""
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, InputError


@dataclass(frozen=True)
class GarbleThresholds:
    window: int = 2
    violation_fraction: float = 0.1
    progress_fraction: float = 0.6

    def __post_init__(self):
        if self.window < 0 or self.violation_fraction < 0 or not 0 <= self.progress_fraction <= 1:
            raise ConfigError(f"invalid garble thresholds {self}")


def focus_positions(alignment):
    """Most-attended encoder index per decoder step (first index on ties)."""
    return np.argmax(alignment, axis=1)


def alignment_diagnostics(alignment, thresholds=GarbleThresholds()):
    """``(violations, entropy_mean, garbled)`` for a ``(T, S)`` alignment.

    A violation is a step where focus jumps back by more than the window.
    The utterance counts as garbled when violations exceed the allowed
    fraction of T or the final focus never got past the progress bar.
    """
    a = np.asarray(alignment, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise InputError("alignment must be a non-empty (T, S) matrix")
    T, S = a.shape
    f = focus_positions(a)
    violations = int(np.sum(f[1:] < f[:-1] - thresholds.window))
    logs = np.log(a, out=np.zeros_like(a), where=a > 0)
    entropy = float(np.mean(-np.sum(a * logs, axis=1)))
    garbled = bool(violations > thresholds.violation_fraction * T
                   or f[-1] < thresholds.progress_fraction * S)
    return violations, entropy, garbled
