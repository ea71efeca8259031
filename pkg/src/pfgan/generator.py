"""Attention-based autoregressive encoder-decoder.

The decoder keeps the two recurrent layers whose hidden states form the
behavior sequence: an attention RNN driving a content-based attention
over the encoder memory, and a decoder RNN producing the output frame.
Prenet dropout is always on, at training and at inference time.
"""
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ._kernels import DecoderWeights
from .diffmath import ParamStore
from .diffmath import ops
from .errors import ConfigError, InputError


@dataclass(frozen=True)
class GeneratorConfig:
    vocab_size: int = 12
    frame_dim: int = 16
    embed_dim: int = 32
    encoder_hidden: int = 32
    prenet_dims: tuple = (32, 32)
    prenet_dropout: float = 0.5
    attn_rnn_hidden: int = 64
    dec_rnn_hidden: int = 64
    attention_dim: int = 32
    cell: str = "gru"
    behavior_includes_output: bool = False

    def __post_init__(self):
        dims = (self.vocab_size, self.frame_dim, self.embed_dim, self.encoder_hidden,
                self.attn_rnn_hidden, self.dec_rnn_hidden, self.attention_dim,
                *self.prenet_dims)
        if min(dims) < 1 or not self.prenet_dims:
            raise ConfigError("all generator dimensions must be >= 1")
        if not 0.0 <= self.prenet_dropout < 1.0:
            raise ConfigError("prenet_dropout must lie in [0, 1)")
        if self.cell != "gru":
            raise ConfigError(f"unsupported recurrent cell {self.cell!r}")

    @property
    def memory_dim(self):
        return 2 * self.encoder_hidden

    @property
    def behavior_dim(self):
        extra = self.frame_dim if self.behavior_includes_output else 0
        return self.attn_rnn_hidden + self.dec_rnn_hidden + extra


@dataclass(frozen=True)
class DecodeMode:
    kind: str
    p: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("tf", "fr", "ss"):
            raise ConfigError(f"unknown decode mode {self.kind!r}")
        if (self.kind == "ss") != (self.p is not None):
            raise ConfigError("a feed probability is given iff the mode is scheduled sampling")
        if self.p is not None and not 0.0 <= self.p <= 1.0:
            raise ConfigError("scheduled-sampling probability must lie in [0, 1]")

    @classmethod
    def scheduled(cls, p):
        return cls("ss", float(p))


TEACHER_FORCING = DecodeMode("tf")
FREE_RUNNING = DecodeMode("fr")


@dataclass(frozen=True)
class SsSchedule:
    p_start: float = 1.0
    p_end: float = 0.5
    decay_steps: int = 50_000

    def __post_init__(self):
        if not 0.0 <= self.p_end <= self.p_start <= 1.0:
            raise ConfigError("need 0 <= p_end <= p_start <= 1")
        if self.decay_steps < 1:
            raise ConfigError("decay_steps must be >= 1")


def ss_probability(schedule, step):
    """Linearly annealed probability of feeding the real previous frame."""
    drop = (schedule.p_start - schedule.p_end) * step / schedule.decay_steps
    return max(schedule.p_end, schedule.p_start - drop)


@dataclass
class Batch:
    ids: list
    symbols: np.ndarray       # (B, S) int, zero padded
    symbol_valid: np.ndarray  # (B, S) bool
    frames: Optional[np.ndarray]  # (B, T, F) or None
    lengths: np.ndarray       # (B,) frame counts

    @property
    def size(self):
        return len(self.ids)

    @property
    def T(self):
        return int(self.lengths.max())

    def frame_valid(self):
        return np.arange(self.T)[None, :] < self.lengths[:, None]


def make_batch(utterances, frame_dim=None):
    """Pad a list of utterances into one :class:`Batch`."""
    if not utterances:
        raise InputError("empty batch")
    B = len(utterances)
    S = max(len(u.symbols) for u in utterances)
    lengths = np.array([u.T for u in utterances], dtype=np.int64)
    F = utterances[0].frames.shape[1] if frame_dim is None else frame_dim
    symbols = np.zeros((B, S), dtype=np.int64)
    valid = np.zeros((B, S), dtype=bool)
    frames = np.zeros((B, int(lengths.max()), F))
    for b, u in enumerate(utterances):
        n = len(u.symbols)
        symbols[b, :n] = u.symbols
        valid[b, :n] = True
        frames[b, :u.T] = u.frames
    return Batch([u.id for u in utterances], symbols, valid, frames, lengths)


class DropoutMasks(NamedTuple):
    """Per-step boolean keep masks, one (T, B, width) array per prenet layer."""
    layers: tuple

    @classmethod
    def draw(cls, rng, T, B, dims, rate):
        return cls(tuple(rng.random((T, B, d)) >= rate for d in dims))

    def at(self, t):
        return [m[t] for m in self.layers]


class Encoded(NamedTuple):
    memory: object   # Var (B, S, M)
    keys: object     # Var (B, S, attention_dim)
    valid: np.ndarray


class DecoderState(NamedTuple):
    attn_h: object
    dec_h: object
    context: object


class StepOutput(NamedTuple):
    frame: object
    attn_h: object
    dec_h: object
    align: np.ndarray
    state: DecoderState


@dataclass
class DecodeResult:
    predicted: object      # Var (B, T, F)
    behavior: object       # Var (B, T, behavior_dim)
    alignment: np.ndarray  # (B, T, S)
    feedback_trace: np.ndarray  # (B, T) bool, True where the real frame was fed
    lengths: np.ndarray
    steps: list = field(default_factory=list, repr=False)

    def behavior_of(self, b):
        return ops.index(self.behavior, (b, slice(0, int(self.lengths[b]))))

    def alignment_of(self, b, n_symbols):
        return self.alignment[b, :int(self.lengths[b]), :n_symbols]


def _uniform(rng, shape, fan_in):
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape)


class Generator:
    """Encoder-decoder with teacher-forced, free-running and scheduled-sampling decoding."""

    def __init__(self, config, seed=0):
        self.config = config
        self.params = ParamStore()
        self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng):
        c = self.config
        add = self.params.add
        E, He, M, F = c.embed_dim, c.encoder_hidden, c.memory_dim, c.frame_dim
        A, Dh, Att = c.attn_rnn_hidden, c.dec_rnn_hidden, c.attention_dim
        add("gen.embed", rng.normal(0.0, 0.3, size=(c.vocab_size, E)))
        for d in ("fwd", "bwd"):
            self._add_gru(rng, f"gen.enc_{d}", E, He)
        prev = F
        for i, width in enumerate(c.prenet_dims):
            add(f"gen.prenet{i}.w", _uniform(rng, (prev, width), prev))
            add(f"gen.prenet{i}.b", np.zeros(width))
            prev = width
        self._add_gru(rng, "gen.attn_rnn", prev + M, A)
        add("gen.attn.wq", _uniform(rng, (A, Att), A))
        add("gen.attn.wm", _uniform(rng, (M, Att), M))
        add("gen.attn.v", _uniform(rng, (Att,), Att))
        self._add_gru(rng, "gen.dec_rnn", A + M, Dh)
        add("gen.proj.w", _uniform(rng, (Dh + M, F), Dh + M))
        add("gen.proj.b", np.zeros(F))

    def _add_gru(self, rng, name, n_in, H):
        self.params.add(f"{name}.wx", _uniform(rng, (n_in, 3 * H), H))
        self.params.add(f"{name}.wh", _uniform(rng, (H, 3 * H), H))
        self.params.add(f"{name}.bx", _uniform(rng, (3 * H,), H))
        self.params.add(f"{name}.bh", _uniform(rng, (3 * H,), H))

    def _gru(self, name, x, h):
        p = self.params
        return ops.gru_cell(x, h, p[f"{name}.wx"].var(), p[f"{name}.wh"].var(),
                            p[f"{name}.bx"].var(), p[f"{name}.bh"].var())

    # -- encoder ---------------------------------------------------------

    def _check_symbols(self, symbols, valid):
        if symbols.size == 0 or not valid.any(axis=1).all():
            raise InputError("every utterance needs at least one symbol")
        used = symbols[valid]
        if used.min() < 0 or used.max() >= self.config.vocab_size:
            bad = used[(used < 0) | (used >= self.config.vocab_size)][0]
            raise InputError(f"out-of-vocabulary symbol {int(bad)}")

    def encode_batch(self, symbols, valid):
        """Bidirectional GRU over padded symbols; returns :class:`Encoded`."""
        symbols = np.asarray(symbols, dtype=np.int64)
        valid = np.asarray(valid, dtype=bool)
        self._check_symbols(symbols, valid)
        c = self.config
        B, S = symbols.shape
        emb = ops.index(self.params["gen.embed"].var(), symbols)
        zero = ops.const(np.zeros((B, c.encoder_hidden)))
        fwd, bwd = [None] * S, [None] * S
        h = zero
        for t in range(S):
            x = ops.index(emb, (slice(None), t))
            h = ops.where(valid[:, t, None], self._gru("gen.enc_fwd", x, h), h)
            fwd[t] = h
        h = zero
        for t in reversed(range(S)):
            x = ops.index(emb, (slice(None), t))
            h = ops.where(valid[:, t, None], self._gru("gen.enc_bwd", x, h), h)
            bwd[t] = h
        memory = ops.concat([ops.stack(fwd, axis=1), ops.stack(bwd, axis=1)], axis=-1)
        keys = ops.affine(memory, self.params["gen.attn.wm"].var())
        return Encoded(memory, keys, valid)

    def encode(self, symbols):
        """Memory ``(S, 2*encoder_hidden)`` for one symbol sequence."""
        symbols = np.asarray(symbols, dtype=np.int64)
        if symbols.ndim != 1 or symbols.size == 0:
            raise InputError("symbol sequence must be non-empty")
        enc = self.encode_batch(symbols[None, :], np.ones((1, symbols.size), dtype=bool))
        return ops.index(enc.memory, 0)

    # -- decoder ---------------------------------------------------------

    def initial_state(self, B):
        c = self.config
        return DecoderState(ops.const(np.zeros((B, c.attn_rnn_hidden))),
                            ops.const(np.zeros((B, c.dec_rnn_hidden))),
                            ops.const(np.zeros((B, c.memory_dim))))

    def decode_step(self, prev_frame, state, enc, keep_masks):
        """One autoregressive step from the previous (real or predicted) frame."""
        c = self.config
        p = self.params
        if prev_frame.shape[-1] != c.frame_dim:
            raise ConfigError(f"previous frame has dim {prev_frame.shape[-1]}, expected {c.frame_dim}")
        x = prev_frame
        for i, keep in enumerate(keep_masks):
            x = ops.relu(ops.affine(x, p[f"gen.prenet{i}.w"].var(), p[f"gen.prenet{i}.b"].var()))
            x = ops.dropout(x, keep, c.prenet_dropout)
        attn_h = self._gru("gen.attn_rnn", ops.concat([x, state.context]), state.attn_h)
        query = ops.affine(attn_h, p["gen.attn.wq"].var())
        context = ops.additive_attention(query, enc.keys, enc.memory, p["gen.attn.v"].var(),
                                         enc.valid)
        dec_h = self._gru("gen.dec_rnn", ops.concat([attn_h, context]), state.dec_h)
        frame = ops.affine(ops.concat([dec_h, context]), p["gen.proj.w"].var(),
                           p["gen.proj.b"].var())
        return StepOutput(frame, attn_h, dec_h, context.aux,
                          DecoderState(attn_h, dec_h, context))

    def run_batch(self, batch, mode, rng=None, masks=None, T=None, fused=True, enc=None):
        """Decode a padded batch in the given mode.

        Dropout masks are drawn from ``rng`` before any scheduled-sampling
        coin, so teacher-forced, free-running and scheduled runs seeded
        alike share masks.  The graph through fed-back predictions is kept.
        ``fused=False`` builds the graph step by step from
        :meth:`decode_step` instead of using the fused unroll kernel.
        ``enc`` reuses an encoding of the same batch from :meth:`encode_batch`.
        """
        c = self.config
        T = batch.T if T is None else int(T)
        if T <= 0:
            raise InputError("decode length must be positive")
        if mode.kind in ("tf", "ss"):
            if batch.frames is None or batch.frames.shape[1] < T:
                raise InputError(f"mode {mode.kind} needs {T} target frames")
        B = batch.size
        if masks is None:
            if rng is None:
                raise InputError("need an rng or explicit dropout masks")
            masks = DropoutMasks.draw(rng, T, B, c.prenet_dims, c.prenet_dropout)
        coins = None
        if mode.kind == "ss":
            if rng is None:
                raise InputError("scheduled sampling needs an rng")
            coins = rng.random((T, B)) < mode.p
        if enc is None:
            enc = self.encode_batch(batch.symbols, batch.symbol_valid)
        if fused:
            return self._run_fused(batch, mode, enc, masks, coins, T)
        state = self.initial_state(B)
        prev = ops.const(np.zeros((B, c.frame_dim)))
        trace = np.zeros((B, T), dtype=bool)
        frames, attn_hs, dec_hs, aligns, steps = [], [], [], [], []
        for t in range(T):
            if t > 0:
                prev = self._feedback(mode, batch, t, frames[-1], coins, trace)
            step = self.decode_step(prev, state, enc, masks.at(t))
            state = step.state
            frames.append(step.frame)
            attn_hs.append(step.attn_h)
            dec_hs.append(step.dec_h)
            aligns.append(step.align)
            steps.append(step)
        predicted = ops.stack(frames, axis=1)
        parts = [ops.stack(attn_hs, axis=1), ops.stack(dec_hs, axis=1)]
        if c.behavior_includes_output:
            parts.append(predicted)
        behavior = ops.concat(parts, axis=-1)
        lengths = np.minimum(batch.lengths, T)
        return DecodeResult(predicted, behavior, np.stack(aligns, axis=1), trace, lengths, steps)

    def decoder_weights(self):
        p = self.params
        n = len(self.config.prenet_dims)
        return DecoderWeights(
            [p[f"gen.prenet{i}.w"].var() for i in range(n)],
            [p[f"gen.prenet{i}.b"].var() for i in range(n)],
            *(p[f"gen.{name}"].var() for name in (
                "attn_rnn.wx", "attn_rnn.wh", "attn_rnn.bx", "attn_rnn.bh", "attn.wq", "attn.v",
                "dec_rnn.wx", "dec_rnn.wh", "dec_rnn.bx", "dec_rnn.bh", "proj.w", "proj.b")))

    def _run_fused(self, batch, mode, enc, masks, coins, T):
        c = self.config
        B = batch.size
        if mode.kind == "tf":
            use_real = np.ones((T, B), dtype=bool)
        elif mode.kind == "fr":
            use_real = np.zeros((T, B), dtype=bool)
        else:
            use_real = coins.copy()
        use_real[0] = False
        keeps = [m.astype(np.float64) / (1.0 - c.prenet_dropout) for m in masks.layers]
        targets = None if mode.kind == "fr" else np.ascontiguousarray(batch.frames[:, :T])
        traj = ops.decoder_unroll(self.decoder_weights(), enc.memory, enc.keys, enc.valid,
                                  targets, use_real, keeps)
        F = c.frame_dim
        predicted = ops.index(traj, (Ellipsis, slice(0, F)))
        parts = [ops.index(traj, (Ellipsis, slice(F, None)))]
        if c.behavior_includes_output:
            parts.append(predicted)
        behavior = parts[0] if len(parts) == 1 else ops.concat(parts, axis=-1)
        lengths = np.minimum(batch.lengths, T)
        return DecodeResult(predicted, behavior, traj.aux, use_real.T.copy(), lengths)

    def _feedback(self, mode, batch, t, last_pred, coins, trace):
        if mode.kind == "fr":
            return last_pred
        real = ops.const(batch.frames[:, t - 1])
        if mode.kind == "tf":
            trace[:, t] = True
            return real
        use_real = coins[t]
        trace[:, t] = use_real
        if use_real.all():
            return real
        if not use_real.any():
            return last_pred
        return ops.where(use_real[:, None], real, last_pred)

    def run(self, symbols, targets, mode, T=None, rng=None, masks=None):
        """Decode a single utterance (batch of one)."""
        symbols = np.asarray(symbols, dtype=np.int64)
        if symbols.ndim != 1 or symbols.size == 0:
            raise InputError("symbol sequence must be non-empty")
        if targets is None:
            if mode.kind != "fr":
                raise InputError(f"mode {mode.kind} requires target frames")
            if T is None or T <= 0:
                raise InputError("free running needs an explicit positive T")
            frames = None
            length = int(T)
        else:
            frames = np.asarray(targets, dtype=np.float64)[None]
            length = frames.shape[1] if T is None else int(T)
        if length <= 0:
            raise InputError("decode length must be positive")
        batch = Batch(["utt"], symbols[None, :], np.ones((1, symbols.size), dtype=bool),
                      frames, np.array([length]))
        return self.run_batch(batch, mode, rng=rng, masks=masks, T=length)
