"""Sequence discriminator over behavior sequences.

Pipeline: spectral-normalized linear + leaky ReLU, causal self-attention
with a residual connection, a second spectral-normalized linear + leaky
ReLU, mean-pool over time and a plain linear head giving one raw score.
"""
from dataclasses import dataclass

import numpy as np

from .diffmath import ParamStore
from .diffmath import ops
from .errors import ConfigError, DegenerateWeight, InputError


@dataclass(frozen=True)
class DiscriminatorConfig:
    input_dim: int = 128
    hidden_dim: int = 64
    output_dim: int = 1
    heads: int = 1
    leaky_slope: float = 0.2
    power_iterations: int = 1

    def __post_init__(self):
        if self.output_dim != 1:
            raise ConfigError("discriminator output_dim must be 1")
        if min(self.input_dim, self.hidden_dim, self.heads, self.power_iterations) < 1:
            raise ConfigError("discriminator dimensions must be >= 1")
        if self.hidden_dim % self.heads:
            raise ConfigError("hidden_dim must be divisible by heads")


def _normalize(x):
    return x / max(np.linalg.norm(x), 1e-12)


def spectral_normalize(W, u, iters=1):
    """Power iteration on ``W`` (out x in) starting from left vector ``u``.

    Returns ``(W / sigma, u_next, sigma)`` where ``sigma = u_next^T W v``.
    """
    W = np.asarray(W, dtype=np.float64)
    if np.linalg.norm(W) < 1e-12:
        raise DegenerateWeight("cannot spectrally normalize a zero matrix")
    if iters < 1:
        raise ConfigError("need at least one power iteration")
    u = _normalize(np.asarray(u, dtype=np.float64))
    for _ in range(iters):
        v = _normalize(W.T @ u)
        u = _normalize(W @ v)
    sigma = float(u @ W @ v)
    return W / sigma, u, sigma


class SnLinear:
    """Linear layer whose weight is divided by its estimated top singular value.

    ``u`` and ``v`` are persistent buffers.  Within one forward they are
    constants, so the gradient of ``sigma = u^T W v`` w.r.t. ``W`` is
    ``u v^T``.
    """

    def __init__(self, params, name, n_in, n_out, rng, bias=True):
        k = 1.0 / np.sqrt(n_in)
        self.name = name
        self.weight = params.add(f"{name}.w", rng.uniform(-k, k, size=(n_out, n_in)))
        self.bias = params.add(f"{name}.b", np.zeros(n_out)) if bias else None
        u = _normalize(rng.normal(size=n_out))
        self.u = params.add(f"{name}.u", u, trainable=False)
        self.v = params.add(f"{name}.v", _normalize(self.weight.value.T @ u), trainable=False)

    def power_iterate(self, iters=1):
        """Advance the singular-vector estimates; returns the new sigma estimate."""
        W = self.weight.value
        if np.linalg.norm(W) < 1e-12:
            raise DegenerateWeight(f"{self.name}: weight is numerically zero")
        u = self.u.value
        for _ in range(iters):
            v = _normalize(W.T @ u)
            u = _normalize(W @ v)
        self.u.value[...] = u
        self.v.value[...] = v
        return float(u @ W @ v)

    def sigma(self):
        return float(self.u.value @ self.weight.value @ self.v.value)

    def effective_weight(self):
        """Var holding ``(W / sigma)^T`` of shape (in, out)."""
        w = self.weight.var()
        sigma = ops.bilinear(self.u.value, w, self.v.value)
        return ops.transpose(ops.div(w, sigma))

    def __call__(self, x, w_eff=None):
        w_eff = self.effective_weight() if w_eff is None else w_eff
        return ops.affine(x, w_eff, None if self.bias is None else self.bias.var())


class Discriminator:
    def __init__(self, config, seed=0, zero_final=False):
        self.config = config
        self.params = ParamStore()
        rng = np.random.default_rng(seed)
        c = config
        p = self.params
        self.inp = SnLinear(p, "disc.in", c.input_dim, c.hidden_dim, rng)
        self.query = SnLinear(p, "disc.attn.q", c.hidden_dim, c.hidden_dim, rng, bias=False)
        self.key = SnLinear(p, "disc.attn.k", c.hidden_dim, c.hidden_dim, rng, bias=False)
        self.value = SnLinear(p, "disc.attn.v", c.hidden_dim, c.hidden_dim, rng, bias=False)
        self.hid = SnLinear(p, "disc.hid", c.hidden_dim, c.hidden_dim, rng)
        k = 1.0 / np.sqrt(c.hidden_dim)
        final = np.zeros((c.hidden_dim, 1)) if zero_final else rng.uniform(-k, k, (c.hidden_dim, 1))
        p.add("disc.out.w", final)
        p.add("disc.out.b", np.zeros(1))

    @property
    def sn_layers(self):
        return [self.inp, self.query, self.key, self.value, self.hid]

    def power_iterate(self, iters=None):
        """Advance every layer's singular-vector estimate (training forward only)."""
        n = self.config.power_iterations if iters is None else iters
        return [layer.power_iterate(n) for layer in self.sn_layers]

    def weights(self):
        """Normalized weight Vars, built once and shared across a batch."""
        return {layer.name: layer.effective_weight() for layer in self.sn_layers}

    def masked_self_attention(self, h, weights=None, return_weights=False):
        """Causal scaled dot-product attention plus residual over ``(..., T, hidden)``."""
        T = h.shape[-2]
        if T == 0:
            raise InputError("cannot attend over an empty sequence")
        w = self.weights() if weights is None else weights
        lead = h.shape[:-2]
        heads = self.config.heads
        d = self.config.hidden_dim // heads
        q = self.query(h, w["disc.attn.q"])
        k = self.key(h, w["disc.attn.k"])
        v = self.value(h, w["disc.attn.v"])
        causal = np.tril(np.ones((T, T), dtype=bool))
        n = len(lead)
        if heads == 1:
            kt = ops.transpose(k, tuple(range(n)) + (n + 1, n))
            scores = ops.scale(ops.matmul(q, kt), 1.0 / np.sqrt(d))
            attn = ops.masked_softmax(scores, causal)
            out = ops.matmul(attn, v)
        else:
            # (..., T, heads, d) -> (..., heads, T, d)
            perm = tuple(range(n)) + (n + 1, n, n + 2)
            split = lambda x: ops.transpose(ops.reshape(x, lead + (T, heads, d)), perm)
            qh, kh, vh = split(q), split(k), split(v)
            kt = ops.transpose(kh, tuple(range(n + 1)) + (n + 2, n + 1))
            scores = ops.scale(ops.matmul(qh, kt), 1.0 / np.sqrt(d))
            attn = ops.masked_softmax(scores, causal)
            out = ops.reshape(ops.transpose(ops.matmul(attn, vh), perm),
                              lead + (T, self.config.hidden_dim))
        out = ops.add(out, h)
        return (out, attn.value) if return_weights else out

    def features(self, behavior, weights=None):
        """Per-row features before pooling, ``(..., T, hidden)``; row t sees rows <= t only."""
        behavior = ops.lift(behavior)
        if behavior.value.ndim not in (2, 3) or behavior.shape[-1] != self.config.input_dim:
            raise ConfigError(f"behavior has shape {behavior.shape}, "
                              f"expected (T, {self.config.input_dim})")
        if behavior.shape[-2] < 1:
            raise InputError("behavior sequence is empty")
        w = self.weights() if weights is None else weights
        slope = self.config.leaky_slope
        h = ops.leaky_relu(self.inp(behavior, w["disc.in"]), slope)
        h = self.masked_self_attention(h, w)
        return ops.leaky_relu(self.hid(h, w["disc.hid"]), slope)

    def _head(self, pooled):
        p = self.params
        return ops.affine(pooled, p["disc.out.w"].var(), p["disc.out.b"].var())

    def score(self, behavior, weights=None):
        """Raw (unsquashed) realness score of one behavior sequence, a scalar Var."""
        if ops.lift(behavior).value.ndim != 2:
            raise ConfigError("score takes a single (T, input_dim) sequence")
        feats = self.features(behavior, weights)
        pooled = ops.reshape(ops.mean(feats, axis=0), (1, -1))
        return ops.reshape(self._head(pooled), ())

    def score_batch(self, behaviors, lengths, weights=None):
        """Scores ``(B,)`` of a zero-padded ``(B, T, input_dim)`` batch.

        Rows past each length never reach earlier rows through the causal
        mask and get zero pooling weight, so each score equals the score of
        the unpadded sequence.
        """
        behaviors = ops.lift(behaviors)
        lengths = np.asarray(lengths, dtype=np.int64)
        if behaviors.value.ndim != 3 or lengths.shape != behaviors.shape[:1]:
            raise ConfigError("score_batch needs (B, T, D) behaviors and B lengths")
        B, T = behaviors.shape[:2]
        if (lengths < 1).any() or (lengths > T).any():
            raise InputError(f"lengths must lie in [1, {T}]")
        feats = self.features(behaviors, weights)
        pool = (np.arange(T)[None, :] < lengths[:, None]) / lengths[:, None]
        pooled = ops.reshape(ops.matmul(pool[:, None, :], feats), (B, -1))
        return ops.reshape(self._head(pooled), (B,))

    def score_many(self, behaviors):
        w = self.weights()
        return [self.score(b, w) for b in behaviors]


def accuracy(disc, tf_behaviors, fr_behaviors):
    """Fraction of sequences classified correctly (TF: score > 0, FR: score < 0)."""
    if not len(tf_behaviors) or not len(fr_behaviors):
        raise InputError("accuracy needs at least one sequence per class")
    tf_scores = [float(s.value) for s in disc.score_many(tf_behaviors)]
    fr_scores = [float(s.value) for s in disc.score_many(fr_behaviors)]
    return accuracy_from_scores(tf_scores, fr_scores)


def accuracy_from_scores(tf_scores, fr_scores):
    if not len(tf_scores) or not len(fr_scores):
        raise InputError("accuracy needs at least one score per class")
    correct = sum(s > 0 for s in tf_scores) + sum(s < 0 for s in fr_scores)
    return correct / (len(tf_scores) + len(fr_scores))
