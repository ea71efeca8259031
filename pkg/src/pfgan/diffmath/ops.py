"""Differentiable primitives.

Each op computes its value with numpy, then registers a closure that maps
the output gradient to one gradient per parent.
"""
import numpy as np

from .. import _kernels
from ..errors import ConfigError
from .tape import Var, lift, record


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def const(x):
    return lift(x)


def add(a, b):
    a, b = lift(a), lift(b)
    return record(a.value + b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = lift(a), lift(b)
    return record(a.value - b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a, b):
    a, b = lift(a), lift(b)
    return record(a.value * b.value, (a, b),
                  lambda g: (_unbroadcast(g * b.value, a.shape),
                             _unbroadcast(g * a.value, b.shape)), "mul")


def scale(a, c):
    a = lift(a)
    return record(a.value * c, (a,), lambda g: (g * c,), "scale")


def div(a, s):
    """``a / s`` for a scalar Var ``s``."""
    a, s = lift(a), lift(s)
    sv = s.value

    def back(g):
        return g / sv, np.reshape(-(g * a.value).sum() / (sv * sv), s.shape)

    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.value / sv
    return record(out, (a, s), back, "div")


def matmul(a, b):
    a, b = lift(a), lift(b)

    def back(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return record(a.value @ b.value, (a, b), back, "matmul")


def affine(x, w, b=None):
    """``x @ w + b`` with ``x`` of shape (..., I)."""
    x, w = lift(x), lift(w)
    if x.shape[-1] != w.shape[0]:
        raise ConfigError(f"affine: input dim {x.shape[-1]} != weight rows {w.shape[0]}")
    out = x.value @ w.value
    if b is None:
        def back(g):
            return g @ w.value.T, x.value.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return record(out, (x, w), back, "affine")
    b = lift(b)

    def back_b(g):
        g2 = g.reshape(-1, g.shape[-1])
        return (g @ w.value.T, x.value.reshape(-1, x.shape[-1]).T @ g2, g2.sum(axis=0))

    return record(out + b.value, (x, w, b), back_b, "affine")


def bilinear(u, w, v):
    """Scalar ``u^T W v`` with ``u`` and ``v`` treated as constants."""
    w = lift(w)
    u = np.asarray(u.value if isinstance(u, Var) else u)
    v = np.asarray(v.value if isinstance(v, Var) else v)
    return record(np.asarray(u @ w.value @ v), (w,),
                  lambda g: (g * np.outer(u, v),), "bilinear")


def concat(xs, axis=-1):
    xs = [lift(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    return record(np.concatenate([x.value for x in xs], axis=axis), tuple(xs),
                  lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


def index(a, key):
    """Slice/index ``a.value[key]``; gradient scatters back into zeros."""
    a = lift(a)

    def back(g):
        out = np.zeros_like(a.value)
        if _is_fancy(key):
            np.add.at(out, key, g)
        else:
            out[key] = g
        return (out,)

    return record(np.array(a.value[key]), (a,), back, "index")


def _is_fancy(key):
    keys = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in keys)


def stack(xs, axis=0):
    xs = [lift(x) for x in xs]
    return record(np.stack([x.value for x in xs], axis=axis), tuple(xs),
                  lambda g: tuple(np.moveaxis(g, axis, 0)), "stack")


def where(mask, a, b):
    """Exact elementwise selection: ``a`` where mask is true, else ``b``."""
    a, b = lift(a), lift(b)
    m = np.asarray(mask, dtype=bool)
    return record(np.where(m, a.value, b.value), (a, b),
                  lambda g: (_unbroadcast(np.where(m, g, 0.0), a.shape),
                             _unbroadcast(np.where(m, 0.0, g), b.shape)), "where")


def tanh(a):
    a = lift(a)
    y = np.tanh(a.value)
    return record(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(a):
    a = lift(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return record(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def leaky_relu(a, slope=0.2):
    a = lift(a)
    pos = a.value > 0
    return record(np.where(pos, a.value, slope * a.value), (a,),
                  lambda g: (np.where(pos, g, slope * g),), "leaky_relu")


def relu(a):
    return leaky_relu(a, 0.0)


def masked_softmax(a, valid, axis=-1):
    """Softmax over ``axis`` restricted to ``valid`` entries.

    Invalid entries get weight 0; a row with no valid entry is all zeros.
    """
    a = lift(a)
    valid = np.asarray(valid, dtype=bool)
    s = np.where(valid, a.value, -np.inf)
    top = s.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(valid, np.exp(s - top), 0.0)
    tot = e.sum(axis=axis, keepdims=True)
    y = np.divide(e, tot, out=np.zeros_like(e), where=tot > 0)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return record(y, (a,), back, "masked_softmax")


def dropout(a, keep_mask, rate):
    """Inverted dropout with a caller-supplied boolean keep mask."""
    a = lift(a)
    m = np.asarray(keep_mask, dtype=np.float64) / (1.0 - rate)
    return record(a.value * m, (a,), lambda g: (g * m,), "dropout")


def sum_all(a):
    a = lift(a)
    return record(np.asarray(a.value.sum()), (a,),
                  lambda g: (np.full_like(a.value, g),), "sum")


def mean(a, axis=None):
    a = lift(a)
    if axis is None:
        n = a.value.size
        return record(np.asarray(a.value.mean()), (a,),
                      lambda g: (np.full_like(a.value, g / n),), "mean")
    n = a.value.shape[axis]
    return record(a.value.mean(axis=axis), (a,),
                  lambda g: (np.broadcast_to(np.expand_dims(g, axis) / n, a.shape).copy(),),
                  "mean")


def mse(pred, target):
    pred, target = lift(pred), lift(target)
    if pred.shape != target.shape:
        raise ConfigError(f"mse shape mismatch {pred.shape} vs {target.shape}")
    d = pred.value - target.value
    n = d.size
    return record(np.asarray((d * d).mean()), (pred, target),
                  lambda g: (2.0 * g * d / n, -2.0 * g * d / n), "mse")


def weighted_sse(pred, target, weights):
    """``sum(weights * (pred - target)**2)`` with constant target and weights."""
    pred = lift(pred)
    t = np.asarray(target.value if isinstance(target, Var) else target)
    w = np.asarray(weights)
    d = pred.value - t
    return record(np.asarray((w * d * d).sum()), (pred,),
                  lambda g: (2.0 * g * w * d,), "weighted_sse")


def gru_cell(x, h, wx, wh, bx, bh):
    """Fused GRU step backed by the active kernel backend."""
    x, h, wx, wh, bx, bh = map(lift, (x, h, wx, wh, bx, bh))
    if x.shape[1] != wx.shape[0] or h.shape[1] * 3 != wh.shape[1]:
        raise ConfigError("gru_cell: dimension mismatch")
    xv = np.ascontiguousarray(x.value)
    hv = np.ascontiguousarray(h.value)
    out, r, z, n, hn = _kernels.gru_forward(xv, hv, wx.value, wh.value, bx.value, bh.value)

    def back(g):
        return _kernels.gru_backward(np.ascontiguousarray(g), xv, hv, wx.value, wh.value,
                                     r, z, n, hn)

    return record(out, (x, h, wx, wh, bx, bh), back, "gru_cell")


def additive_attention(q, keys, memory, v, valid):
    """Content attention ``softmax(v . tanh(q + keys))`` over memory rows.

    Returns the context Var; its ``aux`` holds the (B, S) weight matrix.
    """
    q, keys, memory, v = map(lift, (q, keys, memory, v))
    ctx, w, th = _kernels.attention_forward(
        np.ascontiguousarray(q.value), keys.value, memory.value, v.value, valid)

    def back(g):
        return _kernels.attention_backward(np.ascontiguousarray(g), w, th, memory.value, v.value)

    out = record(ctx, (q, keys, memory, v), back, "additive_attention")
    out.aux = w
    return out


def decoder_unroll(weights, memory, keys, valid, targets, use_real, keeps):
    """Whole autoregressive decoder unroll as one fused node.

    ``weights`` is a ``DecoderWeights`` of Vars.  The result Var has shape
    (B, T, F + A + Dh) = [frame | attention-RNN hidden | decoder-RNN
    hidden]; its ``aux`` is the (B, T, S) alignment.  Gradients flow
    through fed-back predictions wherever ``use_real`` is false.
    """
    flat = [lift(w) for w in weights.flat()]
    n_pre = len(weights.prenet_w)
    memory, keys = lift(memory), lift(keys)
    W = _kernels.DecoderWeights.from_flat([v.value for v in flat], n_pre)
    use_real = np.ascontiguousarray(use_real, dtype=bool)
    keeps = [np.ascontiguousarray(k, dtype=np.float64) for k in keeps]
    traj, align, cache = _kernels.decoder_forward(
        W, memory.value, keys.value, valid, targets, use_real, keeps)

    def back(g):
        grads, dmem, dkeys = _kernels.decoder_backward(
            np.ascontiguousarray(g), W, memory.value, keys.value, valid, use_real, keeps, cache)
        return (*grads.flat(), dmem, dkeys)

    out = record(traj, (*flat, memory, keys), back, "decoder_unroll")
    out.aux = align
    return out


def transpose(a, axes=None):
    a = lift(a)
    inv = None if axes is None else np.argsort(axes)
    return record(np.ascontiguousarray(np.transpose(a.value, axes)), (a,),
                  lambda g: (np.transpose(g, inv),), "transpose")


def reshape(a, shape):
    a = lift(a)
    return record(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")
