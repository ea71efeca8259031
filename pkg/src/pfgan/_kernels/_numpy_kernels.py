"""Reference numpy implementations of the fused recurrent kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same
signature and the same results up to floating-point reassociation.
"""
import numpy as np


def _gate_sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def gru_forward(x, h, wx, wh, bx, bh):
    """One GRU step for a batch.

    Gate layout along the last axis of ``wx``/``wh`` is [reset, update, new].
    Returns ``(h_new, r, z, n, hn)`` where ``hn = h @ wh_n + bh_n`` is kept
    for the backward pass.
    """
    H = h.shape[1]
    gx = x @ wx + bx
    gh = h @ wh + bh
    rz = _gate_sigmoid(gx[:, :2 * H] + gh[:, :2 * H])
    r, z = rz[:, :H], rz[:, H:]
    hn = gh[:, 2 * H:]
    n = np.tanh(gx[:, 2 * H:] + r * hn)
    h_new = (1.0 - z) * n + z * h
    return h_new, r, z, n, np.ascontiguousarray(hn)


def gru_backward(dh_new, x, h, wx, wh, r, z, n, hn):
    """Gradients of one GRU step: ``(dx, dh, dwx, dwh, dbx, dbh)``."""
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dan = dn * (1.0 - n * n)
    dr = dan * hn
    dar = dr * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    dgx = np.concatenate([dar, daz, dan], axis=1)
    dgh = np.concatenate([dar, daz, dan * r], axis=1)
    dx = dgx @ wx.T
    dh = dh_new * z + dgh @ wh.T
    return dx, dh, x.T @ dgx, h.T @ dgh, dgx.sum(axis=0), dgh.sum(axis=0)


def attention_forward(q, keys, memory, v, valid):
    """Additive content attention.

    ``q`` (B, A) is the projected query, ``keys`` (B, S, A) the projected
    memory, ``memory`` (B, S, M) the values, ``valid`` (B, S) a boolean
    mask of real encoder positions.  Returns ``(context, weights, th)``
    where ``th = tanh(q + keys)`` is cached for backward.  Rows with no
    valid position get all-zero weights.
    """
    th = np.tanh(q[:, None, :] + keys)
    scores = th @ v
    scores = np.where(valid, scores, -np.inf)
    top = scores.max(axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(valid, np.exp(scores - top), 0.0)
    tot = e.sum(axis=1, keepdims=True)
    w = np.divide(e, tot, out=np.zeros_like(e), where=tot > 0)
    ctx = np.einsum("bs,bsm->bm", w, memory)
    return ctx, w, th


def attention_backward(dctx, w, th, memory, v):
    """Gradients of :func:`attention_forward`: ``(dq, dkeys, dmemory, dv)``."""
    dw = np.einsum("bm,bsm->bs", dctx, memory)
    dmemory = w[:, :, None] * dctx[:, None, :]
    de = w * (dw - (w * dw).sum(axis=1, keepdims=True))
    dv = np.einsum("bs,bsa->a", de, th)
    dpre = de[:, :, None] * v[None, None, :] * (1.0 - th * th)
    return dpre.sum(axis=1), dpre, dmemory, dv


def decoder_forward(W, memory, keys, valid, targets, use_real, keeps):
    """Unrolled decoder over ``T = use_real.shape[0]`` steps.

    ``W`` is a :class:`DecoderWeights`; ``targets`` is (B, >=T-1, F) or
    None when nothing is ever fed from it; ``use_real`` (T, B) picks the
    real previous frame over the prediction (row 0 is ignored, step 0
    sees the zero go-frame); ``keeps`` holds one pre-scaled dropout
    multiplier array (T, B, width) per prenet layer.

    Returns ``(traj, align, cache)`` with ``traj`` (B, T, F + A + Dh)
    laid out as [frame | attention-RNN hidden | decoder-RNN hidden].
    """
    T, B = use_real.shape
    S, M = memory.shape[1], memory.shape[2]
    F = W.proj_b.shape[0]
    A = W.arnn_wh.shape[0]
    Dh = W.drnn_wh.shape[0]
    L = len(W.prenet_w)
    c = {
        "prev": np.zeros((T, B, F)),
        "pre_a": [np.zeros((T, B, w.shape[1])) for w in W.prenet_w],
        "pre_out": [np.zeros((T, B, w.shape[1])) for w in W.prenet_w],
        "a_in": np.zeros((T, B, W.arnn_wx.shape[0])),
        "a_h0": np.zeros((T, B, A)),
        "a_gates": np.zeros((T, 4, B, A)),
        "a_h": np.zeros((T, B, A)),
        "th": np.zeros((T, B, S, W.v.shape[0])),
        "w": np.zeros((T, B, S)),
        "ctx": np.zeros((T, B, M)),
        "d_h0": np.zeros((T, B, Dh)),
        "d_gates": np.zeros((T, 4, B, Dh)),
        "d_h": np.zeros((T, B, Dh)),
        "frame": np.zeros((T, B, F)),
    }
    a_h = np.zeros((B, A))
    d_h = np.zeros((B, Dh))
    ctx = np.zeros((B, M))
    for t in range(T):
        if t > 0:
            fed = np.where(use_real[t][:, None], targets[:, t - 1], c["frame"][t - 1]) \
                if targets is not None else c["frame"][t - 1]
            c["prev"][t] = fed
        x = c["prev"][t]
        for i in range(L):
            a = x @ W.prenet_w[i] + W.prenet_b[i]
            c["pre_a"][i][t] = a
            x = np.maximum(a, 0.0) * keeps[i][t]
            c["pre_out"][i][t] = x
        a_in = np.concatenate([x, ctx], axis=1)
        c["a_in"][t] = a_in
        c["a_h0"][t] = a_h
        a_h, r, z, n, hn = gru_forward(a_in, a_h, W.arnn_wx, W.arnn_wh, W.arnn_bx, W.arnn_bh)
        c["a_gates"][t] = (r, z, n, hn)
        c["a_h"][t] = a_h
        ctx, w, th = attention_forward(a_h @ W.wq, keys, memory, W.v, valid)
        c["th"][t], c["w"][t], c["ctx"][t] = th, w, ctx
        c["d_h0"][t] = d_h
        d_h, r, z, n, hn = gru_forward(np.concatenate([a_h, ctx], axis=1), d_h,
                                       W.drnn_wx, W.drnn_wh, W.drnn_bx, W.drnn_bh)
        c["d_gates"][t] = (r, z, n, hn)
        c["d_h"][t] = d_h
        c["frame"][t] = np.concatenate([d_h, ctx], axis=1) @ W.proj_w + W.proj_b
    traj = np.concatenate([c["frame"], c["a_h"], c["d_h"]], axis=2).transpose(1, 0, 2)
    return np.ascontiguousarray(traj), np.ascontiguousarray(c["w"].transpose(1, 0, 2)), c


def decoder_backward(dtraj, W, memory, keys, valid, use_real, keeps, c):
    """Backpropagation through time for :func:`decoder_forward`.

    Returns ``(grads, dmemory, dkeys)`` where ``grads`` mirrors ``W``.
    """
    T, B = use_real.shape
    F = W.proj_b.shape[0]
    A = W.arnn_wh.shape[0]
    Dh = W.drnn_wh.shape[0]
    P = W.prenet_w[-1].shape[1]
    L = len(W.prenet_w)
    g = {name: np.zeros_like(getattr(W, name)) for name in W._fields if name not in
         ("prenet_w", "prenet_b")}
    g_pw = [np.zeros_like(w) for w in W.prenet_w]
    g_pb = [np.zeros_like(b) for b in W.prenet_b]
    dmemory = np.zeros_like(memory)
    dkeys = np.zeros_like(keys)
    dtraj = dtraj.transpose(1, 0, 2)
    g_frame_carry = np.zeros((B, F))
    g_ah = np.zeros((B, A))
    g_dh = np.zeros((B, Dh))
    g_ctx_carry = np.zeros((B, memory.shape[2]))
    for t in reversed(range(T)):
        ctx = c["ctx"][t]
        gf = dtraj[t, :, :F] + g_frame_carry
        g_ah = g_ah + dtraj[t, :, F:F + A]
        g_dh = g_dh + dtraj[t, :, F + A:]
        o_in = np.concatenate([c["d_h"][t], ctx], axis=1)
        g["proj_w"] += o_in.T @ gf
        g["proj_b"] += gf.sum(axis=0)
        d_oin = gf @ W.proj_w.T
        g_dh = g_dh + d_oin[:, :Dh]
        g_ctx = d_oin[:, Dh:] + g_ctx_carry
        r, z, n, hn = c["d_gates"][t]
        d_in = np.concatenate([c["a_h"][t], ctx], axis=1)
        dx, g_dh, dwx, dwh, dbx, dbh = gru_backward(g_dh, d_in, c["d_h0"][t],
                                                    W.drnn_wx, W.drnn_wh, r, z, n, hn)
        g["drnn_wx"] += dwx
        g["drnn_wh"] += dwh
        g["drnn_bx"] += dbx
        g["drnn_bh"] += dbh
        g_ah = g_ah + dx[:, :A]
        g_ctx = g_ctx + dx[:, A:]
        dq, dk, dm, dv = attention_backward(g_ctx, c["w"][t], c["th"][t], memory, W.v)
        dkeys += dk
        dmemory += dm
        g["v"] += dv
        g["wq"] += c["a_h"][t].T @ dq
        g_ah = g_ah + dq @ W.wq.T
        r, z, n, hn = c["a_gates"][t]
        dx, g_ah, dwx, dwh, dbx, dbh = gru_backward(g_ah, c["a_in"][t], c["a_h0"][t],
                                                    W.arnn_wx, W.arnn_wh, r, z, n, hn)
        g["arnn_wx"] += dwx
        g["arnn_wh"] += dwh
        g["arnn_bx"] += dbx
        g["arnn_bh"] += dbh
        g_ctx_carry = dx[:, P:]
        gx = dx[:, :P]
        for i in reversed(range(L)):
            ga = gx * keeps[i][t] * (c["pre_a"][i][t] > 0)
            inp = c["pre_out"][i - 1][t] if i > 0 else c["prev"][t]
            g_pw[i] += inp.T @ ga
            g_pb[i] += ga.sum(axis=0)
            gx = ga @ W.prenet_w[i].T
        if t > 0:
            g_frame_carry = np.where(use_real[t][:, None], 0.0, gx)
    grads = W._replace(prenet_w=g_pw, prenet_b=g_pb, **g)
    return grads, dmemory, dkeys
