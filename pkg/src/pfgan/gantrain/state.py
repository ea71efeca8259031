"""Training configuration and per-step records."""
from dataclasses import dataclass, fields
from typing import Optional

from ..errors import ConfigError

MODES = ("tf", "ss", "tf-gan", "ss-gan")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "tf-gan"
    alpha: float = 1e-3
    pretrain_steps: int = 1500
    gan_steps: int = 1500
    probe_period: int = 50
    probe_batches: int = 4
    r_low: float = 0.75
    r_high: float = 0.97
    batch_size: int = 16
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    lr_final: float = 1e-5
    lr_decay_steps: Optional[int] = None
    ss_start: float = 1.0
    ss_end: float = 0.5
    ss_decay_steps: Optional[int] = None
    disc_hidden: int = 64
    disc_heads: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown training mode {self.mode!r}; choose from {', '.join(MODES)}")
        if not 0.0 <= self.r_low < self.r_high <= 1.0:
            raise ConfigError("need 0 <= r_low < r_high <= 1")
        if self.probe_period < 1 or self.probe_batches < 1:
            raise ConfigError("probe_period and probe_batches must be >= 1")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.batch_size < 1 or self.pretrain_steps < 0 or self.gan_steps < 0:
            raise ConfigError("batch_size must be >= 1 and step counts >= 0")
        if min(self.lr_g, self.lr_d, self.lr_final) <= 0:
            raise ConfigError("learning rates must be positive")
        if not 0.0 <= self.ss_end <= self.ss_start <= 1.0:
            raise ConfigError("need 0 <= ss_end <= ss_start <= 1")
        for name in ("lr_decay_steps", "ss_decay_steps"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def adversarial(self):
        return self.mode.endswith("-gan")

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}


@dataclass(frozen=True)
class GateState:
    s_g: bool = False
    s_d: bool = True


@dataclass
class LossReport:
    step: int
    phase: str
    mode: str
    L_T: float
    lr_g: float
    L_D: Optional[float] = None
    L_G: Optional[float] = None
    score_t: Optional[float] = None
    score_f: Optional[float] = None
    accuracy: Optional[float] = None
    s_g: Optional[bool] = None
    s_d: Optional[bool] = None
    lr_d: Optional[float] = None
