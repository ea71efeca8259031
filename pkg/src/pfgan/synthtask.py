"""Synthetic symbol-to-frame corpus with real autoregressive structure.

Each symbol owns a fixed Gaussian envelope over the frame channels and a
fixed duration.  Frames follow a first-order smoothing recurrence towards
the active envelope, so every frame depends on its predecessor and a
model decoding from its own predictions can drift.
"""
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, StorageError

MAGIC = "PFDATA 1"

# SeedSequence stream tags, kept distinct so no two draws share entropy
_TAG_ENVELOPE = 1
_TAG_DURATION = 2
_TAG_NOISE = 3
_TAG_SYMBOLS = 4
_TAG_HELDOUT = 5
_SPLIT_TAGS = {"train": 10, "dev": 11, "eval": 12}


@dataclass(frozen=True)
class CorpusConfig:
    vocab_size: int = 12
    frame_dim: int = 16
    d_min: int = 3
    d_max: int = 6
    smoothing: float = 0.6
    noise: float = 0.01
    l_min: int = 4
    l_max: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2 or self.frame_dim < 2:
            raise ConfigError("vocab_size and frame_dim must both be >= 2")
        if not 1 <= self.d_min <= self.d_max:
            raise ConfigError("need 1 <= d_min <= d_max")
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigError("smoothing must lie in [0, 1)")
        if self.noise < 0:
            raise ConfigError("noise amplitude must be >= 0")
        if not 1 <= self.l_min <= self.l_max:
            raise ConfigError("need 1 <= l_min <= l_max")


@dataclass
class Utterance:
    id: str
    symbols: np.ndarray
    frames: np.ndarray

    @property
    def T(self):
        return self.frames.shape[0]


def _rng(*entropy):
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


def envelope(symbol, config):
    """The channel profile a symbol pulls the frames towards, in [0, 1]^F."""
    rng = _rng(config.seed, _TAG_ENVELOPE, symbol)
    F = config.frame_dim
    center = rng.uniform(0.0, F - 1.0)
    width = rng.uniform(0.75, max(1.0, F / 5.0))
    height = rng.uniform(0.6, 1.0)
    ch = np.arange(F, dtype=np.float64)
    return height * np.exp(-0.5 * ((ch - center) / width) ** 2)


def duration(symbol, config):
    rng = _rng(config.seed, _TAG_DURATION, symbol)
    return int(rng.integers(config.d_min, config.d_max + 1))


def target_length(symbols, config):
    return sum(duration(int(s), config) for s in symbols)


def _check_symbols(symbols, config):
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.ndim != 1 or symbols.size == 0:
        raise InputError("symbol sequence must be a non-empty 1-D sequence")
    bad = symbols[(symbols < 0) | (symbols >= config.vocab_size)]
    if bad.size:
        raise InputError(f"out-of-vocabulary symbol {int(bad[0])} (K={config.vocab_size})")
    return symbols


def smooth_step(prev, env, smoothing, noise=0.0):
    """One step of the frame recurrence, clamped to [0, 1]."""
    return np.clip(smoothing * prev + (1.0 - smoothing) * env + noise, 0.0, 1.0)


def render_target(symbols, config):
    """Frames ``(T, F)`` for a symbol sequence; pure in ``(symbols, seed)``."""
    symbols = _check_symbols(symbols, config)
    lam = config.smoothing
    envs = {int(s): envelope(int(s), config) for s in np.unique(symbols)}
    active = np.concatenate([np.full(duration(int(s), config), int(s)) for s in symbols])
    T, F = active.size, config.frame_dim
    rng = _rng(config.seed, _TAG_NOISE, len(symbols), *symbols.tolist())
    noise = rng.uniform(-config.noise, config.noise, size=(T, F)) if config.noise > 0 \
        else np.zeros((T, F))
    frames = np.empty((T, F))
    prev = np.zeros(F)
    for t in range(T):
        prev = smooth_step(prev, envs[int(active[t])], lam, noise[t])
        frames[t] = prev
    return frames


def heldout_bigrams(config):
    """Symbol pairs that never occur in train/dev utterances."""
    K = config.vocab_size
    pairs = [(a, b) for a in range(K) for b in range(K) if a != b]
    rng = _rng(config.seed, _TAG_HELDOUT)
    n = max(1, len(pairs) // 10)
    pick = rng.choice(len(pairs), size=n, replace=False)
    return {pairs[i] for i in sorted(pick)}


def _sample_symbols(rng, length, K, banned):
    seq = [int(rng.integers(K))]
    while len(seq) < length:
        allowed = [s for s in range(K) if (seq[-1], s) not in banned]
        seq.append(int(allowed[rng.integers(len(allowed))]))
    return seq


def _sample_pathological(rng, length, K, heldout):
    seq = [int(s) for s in rng.integers(K, size=length)]
    if not any((a, b) in heldout for a, b in zip(seq, seq[1:])):
        pairs = sorted(heldout)
        a, b = pairs[rng.integers(len(pairs))]
        at = int(rng.integers(length - 1))
        seq[at], seq[at + 1] = a, b
    return seq


def quantize(frames):
    """Round to the 9 significant digits the corpus format stores."""
    return np.array([[float(f"{v:.9g}") for v in row] for row in frames])


def make_split(config, split, count, multiplier=1):
    K = config.vocab_size
    heldout = heldout_bigrams(config)
    lo, hi = config.l_min * multiplier, config.l_max * multiplier
    utts = []
    for i in range(count):
        rng = _rng(config.seed, _TAG_SYMBOLS, _SPLIT_TAGS[split], i)
        length = int(rng.integers(lo, hi + 1))
        if split == "eval":
            symbols = _sample_pathological(rng, length, K, heldout)
        else:
            symbols = _sample_symbols(rng, length, K, heldout)
        symbols = np.asarray(symbols, dtype=np.int64)
        frames = quantize(render_target(symbols, config))
        utts.append(Utterance(f"{split}-{i:06d}", symbols, frames))
    return utts


def make_corpus(config, n_train, n_dev, n_eval, eval_length_multiplier, out_dir):
    """Write ``train.pfd``, ``dev.pfd`` and ``eval.pfd`` into ``out_dir``.

    ``dev`` uses training lengths (the "common" evaluation set); ``eval``
    stretches utterance lengths by ``eval_length_multiplier`` and always
    contains at least one symbol bigram that never occurs in training.
    """
    if min(n_train, n_dev, n_eval) < 1:
        raise ConfigError("split sizes must be >= 1")
    if eval_length_multiplier < 1:
        raise ConfigError("eval_length_multiplier must be >= 1")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create {out_dir}: {exc}") from exc
    paths = {}
    for split, n, mult in (("train", n_train, 1), ("dev", n_dev, 1),
                           ("eval", n_eval, eval_length_multiplier)):
        path = os.path.join(out_dir, f"{split}.pfd")
        write_corpus(path, config.vocab_size, config.frame_dim, make_split(config, split, n, mult))
        paths[split] = path
    return paths


def write_corpus(path, K, F, utterances):
    lines = [MAGIC, f"{K} {F}"]
    for u in utterances:
        lines.append(u.id)
        lines.append(" ".join(str(int(s)) for s in u.symbols))
        lines.append(str(u.T))
        lines.extend(" ".join(f"{v:.9g}" for v in row) for row in u.frames)
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"cannot write corpus {path}: {exc}") from exc


def read_corpus(path):
    """Parse a corpus file into ``(K, F, [Utterance, ...])``."""
    try:
        with open(path, encoding="ascii") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise StorageError(f"cannot read corpus {path}: {exc}") from exc
    if not lines or lines[0] != MAGIC:
        raise StorageError(f"{path}: not a corpus file (bad magic)")
    try:
        K, F = (int(t) for t in lines[1].split())
        utts = []
        i = 2
        while i < len(lines):
            uid = lines[i]
            symbols = np.array([int(t) for t in lines[i + 1].split()], dtype=np.int64)
            T = int(lines[i + 2])
            rows = lines[i + 3:i + 3 + T]
            if len(rows) != T:
                raise ValueError(f"utterance {uid} truncated")
            frames = np.array([[float(t) for t in r.split()] for r in rows]).reshape(T, F)
            utts.append(Utterance(uid, symbols, frames))
            i += 3 + T
    except (ValueError, IndexError) as exc:
        raise StorageError(f"{path}: malformed corpus ({exc})") from exc
    return K, F, utts
