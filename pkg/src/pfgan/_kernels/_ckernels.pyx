# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled GRU, additive-attention and fused decoder kernels.

Products go through the BLAS that scipy ships and gate arithmetic runs in
plain loops.  Hyperbolic tangents are evaluated by numpy's vectorised
ufunc on whole scratch buffers: the scalar libm routine is several times
slower per element than the SIMD one.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

_tanh = np.tanh


cdef void _mm(bint ta, bint tb, int m, int n, int k,
              double* a, int lda, double* b, int ldb,
              double beta, double* c, int ldc) noexcept nogil:
    # row-major C(m,n) = op(A) op(B) + beta*C, via column-major BLAS on the transposes
    cdef char ca = b'T' if ta else b'N'
    cdef char cb = b'T' if tb else b'N'
    cdef double one = 1.0
    cdef int i, j
    if m == 0 or n == 0:
        return
    if k == 0:
        if beta == 0.0:
            for i in range(m):
                for j in range(n):
                    c[i * ldc + j] = 0.0
        return
    dgemm(&cb, &ca, &n, &m, &k, &one, b, &ldb, a, &lda, &beta, c, &ldc)


# --- GRU ------------------------------------------------------------------

cdef _gru_fwd(double[:, ::1] x, double[:, ::1] h, double[:, ::1] wx, double[:, ::1] wh,
              double[::1] bx, double[::1] bh, double[:, ::1] gx, double[:, ::1] gh,
              rz_arr, n_arr, double[:, :, ::1] gates, double[:, ::1] out):
    """gates[0..3] receive r, z, n, hn; ``rz_arr``/``n_arr`` are scratch ndarrays."""
    cdef int B = x.shape[0], I = x.shape[1], H = h.shape[1]
    cdef int G = 3 * H
    cdef int b, j
    cdef double[:, ::1] rz = rz_arr
    cdef double[:, ::1] nn = n_arr
    cdef double r, hn
    _mm(False, False, B, G, I, &x[0, 0], I, &wx[0, 0], G, 0.0, &gx[0, 0], G)
    _mm(False, False, B, G, H, &h[0, 0], H, &wh[0, 0], G, 0.0, &gh[0, 0], G)
    for b in range(B):
        for j in range(2 * H):
            rz[b, j] = 0.5 * ((gx[b, j] + bx[j]) + (gh[b, j] + bh[j]))
    _tanh(rz_arr, out=rz_arr)
    for b in range(B):
        for j in range(H):
            r = 0.5 * (1.0 + rz[b, j])
            hn = gh[b, 2 * H + j] + bh[2 * H + j]
            gates[0, b, j] = r
            gates[1, b, j] = 0.5 * (1.0 + rz[b, H + j])
            gates[3, b, j] = hn
            nn[b, j] = (gx[b, 2 * H + j] + bx[2 * H + j]) + r * hn
    _tanh(n_arr, out=n_arr)
    for b in range(B):
        for j in range(H):
            gates[2, b, j] = nn[b, j]
            out[b, j] = (1.0 - gates[1, b, j]) * nn[b, j] + gates[1, b, j] * h[b, j]


cdef void _gru_bwd(double[:, ::1] dh_new, double[:, ::1] x, double[:, ::1] h,
                   double[:, ::1] wx, double[:, ::1] wh, double[:, :, ::1] gates,
                   double[:, ::1] dgx, double[:, ::1] dgh,
                   double[:, ::1] dx, double[:, ::1] dh,
                   double[:, ::1] dwx, double[:, ::1] dwh, double[::1] dbx, double[::1] dbh,
                   double beta) noexcept nogil:
    """Writes dx and dh; adds into dwx/dwh/dbx/dbh when ``beta`` is 1, overwrites when 0."""
    cdef int B = x.shape[0], I = x.shape[1], H = h.shape[1]
    cdef int G = 3 * H
    cdef int b, j
    cdef double r, z, n, dn, dz, dan, dar
    if beta == 0.0:
        for j in range(G):
            dbx[j] = 0.0
            dbh[j] = 0.0
    for b in range(B):
        for j in range(H):
            r = gates[0, b, j]
            z = gates[1, b, j]
            n = gates[2, b, j]
            dn = dh_new[b, j] * (1.0 - z)
            dz = dh_new[b, j] * (h[b, j] - n)
            dan = dn * (1.0 - n * n)
            dar = dan * gates[3, b, j] * r * (1.0 - r)
            dgx[b, j] = dar
            dgx[b, H + j] = dz * z * (1.0 - z)
            dgx[b, 2 * H + j] = dan
            dgh[b, j] = dar
            dgh[b, H + j] = dgx[b, H + j]
            dgh[b, 2 * H + j] = dan * r
            dh[b, j] = dh_new[b, j] * z
    for b in range(B):
        for j in range(G):
            dbx[j] += dgx[b, j]
            dbh[j] += dgh[b, j]
    _mm(False, True, B, I, G, &dgx[0, 0], G, &wx[0, 0], G, 0.0, &dx[0, 0], I)
    _mm(False, True, B, H, G, &dgh[0, 0], G, &wh[0, 0], G, 1.0, &dh[0, 0], H)
    _mm(True, False, I, G, B, &x[0, 0], I, &dgx[0, 0], G, beta, &dwx[0, 0], G)
    _mm(True, False, H, G, B, &h[0, 0], H, &dgh[0, 0], G, beta, &dwh[0, 0], G)


def gru_forward(double[:, ::1] x, double[:, ::1] h, double[:, ::1] wx,
                double[:, ::1] wh, double[::1] bx, double[::1] bh):
    cdef int B = x.shape[0], H = h.shape[1]
    gates = np.empty((4, B, H))
    out = np.empty((B, H))
    _gru_fwd(x, h, wx, wh, bx, bh, np.empty((B, 3 * H)), np.empty((B, 3 * H)),
             np.empty((B, 2 * H)), np.empty((B, H)), gates, out)
    return out, gates[0], gates[1], gates[2], gates[3]


def gru_backward(double[:, ::1] dh_new, double[:, ::1] x, double[:, ::1] h,
                 double[:, ::1] wx, double[:, ::1] wh, r, z, n, hn):
    cdef int B = x.shape[0], I = x.shape[1], H = h.shape[1]
    gates = np.ascontiguousarray(np.stack([r, z, n, hn]))
    dx = np.empty((B, I))
    dh = np.empty((B, H))
    dwx = np.empty((I, 3 * H))
    dwh = np.empty((H, 3 * H))
    dbx = np.empty(3 * H)
    dbh = np.empty(3 * H)
    _gru_bwd(dh_new, x, h, wx, wh, gates, np.empty((B, 3 * H)), np.empty((B, 3 * H)),
             dx, dh, dwx, dwh, dbx, dbh, 0.0)
    return dx, dh, dwx, dwh, dbx, dbh


# --- additive attention ------------------------------------------------------

cdef _attn_fwd(double[:, ::1] q, double[:, :, ::1] keys, double[:, :, ::1] memory,
               double[::1] v, cnp.uint8_t[:, ::1] ok, th_arr,
               double[:, ::1] w, double[:, ::1] ctx):
    cdef int B = keys.shape[0], S = keys.shape[1], A = keys.shape[2]
    cdef int M = memory.shape[2]
    cdef int b, s, a, m
    cdef double acc, top, tot
    cdef double[:, :, ::1] th = th_arr
    for b in range(B):
        for s in range(S):
            for a in range(A):
                th[b, s, a] = q[b, a] + keys[b, s, a]
    _tanh(th_arr, out=th_arr)
    for b in range(B):
        top = -INFINITY
        for s in range(S):
            acc = 0.0
            for a in range(A):
                acc = acc + th[b, s, a] * v[a]
            w[b, s] = acc
            if ok[b, s] and acc > top:
                top = acc
        tot = 0.0
        for s in range(S):
            if ok[b, s]:
                w[b, s] = exp(w[b, s] - top)
                tot = tot + w[b, s]
            else:
                w[b, s] = 0.0
        for m in range(M):
            ctx[b, m] = 0.0
        if tot > 0:
            for s in range(S):
                w[b, s] = w[b, s] / tot
                for m in range(M):
                    ctx[b, m] += w[b, s] * memory[b, s, m]


cdef void _attn_bwd(double[:, ::1] dctx, double[:, ::1] w, double[:, :, ::1] th,
                    double[:, :, ::1] memory, double[::1] v, double[:, ::1] dq,
                    double[:, :, ::1] dk, double[:, :, ::1] dmem, double[::1] dv,
                    double[::1] dw) noexcept nogil:
    """Writes dq; adds into dk, dmem and dv."""
    cdef int B = th.shape[0], S = th.shape[1], A = th.shape[2]
    cdef int M = memory.shape[2]
    cdef int b, s, a, m
    cdef double acc, mix, de, g
    for b in range(B):
        for a in range(A):
            dq[b, a] = 0.0
        mix = 0.0
        for s in range(S):
            acc = 0.0
            for m in range(M):
                acc = acc + dctx[b, m] * memory[b, s, m]
                dmem[b, s, m] += w[b, s] * dctx[b, m]
            dw[s] = acc
            mix = mix + w[b, s] * acc
        for s in range(S):
            de = w[b, s] * (dw[s] - mix)
            if de == 0.0:
                continue
            for a in range(A):
                dv[a] += de * th[b, s, a]
                g = de * v[a] * (1.0 - th[b, s, a] * th[b, s, a])
                dk[b, s, a] += g
                dq[b, a] += g


def attention_forward(double[:, ::1] q, double[:, :, ::1] keys,
                      double[:, :, ::1] memory, double[::1] v, valid):
    cdef int B = keys.shape[0], S = keys.shape[1], A = keys.shape[2]
    ok = np.ascontiguousarray(valid, dtype=np.uint8)
    th = np.empty((B, S, A))
    w = np.empty((B, S))
    ctx = np.empty((B, memory.shape[2]))
    _attn_fwd(q, keys, memory, v, ok, th, w, ctx)
    return ctx, w, th


def attention_backward(double[:, ::1] dctx, double[:, ::1] w,
                       double[:, :, ::1] th, double[:, :, ::1] memory, double[::1] v):
    cdef int B = th.shape[0], S = th.shape[1], A = th.shape[2]
    dq = np.empty((B, A))
    dk = np.zeros((B, S, A))
    dm = np.zeros((B, S, memory.shape[2]))
    dv = np.zeros(A)
    _attn_bwd(dctx, w, th, memory, v, dq, dk, dm, dv, np.empty(S))
    return dq, dk, dm, dv


# --- fused decoder -----------------------------------------------------------

def _alloc_cache(int T, int B, int F, list widths, int A, int Dh, int S, int Att, int M):
    P = widths[len(widths) - 1]
    return {
        "prev": np.zeros((T, B, F)),
        "pre_a": [np.zeros((T, B, w)) for w in widths],
        "pre_out": [np.zeros((T, B, w)) for w in widths],
        "a_in": np.zeros((T, B, P + M)),
        "a_h0": np.zeros((T, B, A)),
        "a_gates": np.zeros((T, 4, B, A)),
        "a_h": np.zeros((T, B, A)),
        "th": np.zeros((T, B, S, Att)),
        "w": np.zeros((T, B, S)),
        "ctx": np.zeros((T, B, M)),
        "d_in": np.zeros((T, B, A + M)),
        "d_h0": np.zeros((T, B, Dh)),
        "d_gates": np.zeros((T, 4, B, Dh)),
        "d_h": np.zeros((T, B, Dh)),
        "o_in": np.zeros((T, B, Dh + M)),
        "frame": np.zeros((T, B, F)),
    }


def decoder_forward(W, double[:, :, ::1] memory, double[:, :, ::1] keys, valid,
                    targets, use_real_arr, keeps):
    cdef cnp.uint8_t[:, ::1] use_real = use_real_arr.view(np.uint8)
    cdef int T = use_real.shape[0], B = use_real.shape[1]
    cdef int S = memory.shape[1], M = memory.shape[2], Att = keys.shape[2]
    cdef int F = W.proj_b.shape[0], A = W.arnn_wh.shape[0], Dh = W.drnn_wh.shape[0]
    cdef int L = len(W.prenet_w)
    cdef list widths = [w.shape[1] for w in W.prenet_w]
    cdef int P = widths[L - 1]
    cdef int t, b, j, i, n_in, width
    cdef double[:, :, ::1] tgt
    cdef bint have_tgt = targets is not None
    if have_tgt:
        tgt = targets
    cache = _alloc_cache(T, B, F, widths, A, Dh, S, Att, M)
    cdef double[:, :, ::1] prev = cache["prev"], a_in = cache["a_in"], a_h0 = cache["a_h0"]
    cdef double[:, :, ::1] a_hs = cache["a_h"], ws = cache["w"], ctxs = cache["ctx"]
    cdef double[:, :, ::1] d_in = cache["d_in"], d_h0 = cache["d_h0"], d_hs = cache["d_h"]
    cdef double[:, :, ::1] o_in = cache["o_in"], frames = cache["frame"]
    cdef double[:, :, :, ::1] a_gates = cache["a_gates"], d_gates = cache["d_gates"]
    th_all = cache["th"]
    cdef double[:, ::1] a_wx = W.arnn_wx, a_wh = W.arnn_wh, d_wx = W.drnn_wx, d_wh = W.drnn_wh
    cdef double[::1] a_bx = W.arnn_bx, a_bh = W.arnn_bh, d_bx = W.drnn_bx, d_bh = W.drnn_bh
    cdef double[:, ::1] wq = W.wq, pw = W.proj_w
    cdef double[::1] v = W.v, pb = W.proj_b
    cdef cnp.uint8_t[:, ::1] ok = np.ascontiguousarray(valid, dtype=np.uint8)
    cdef double[:, ::1] gx_a = np.empty((B, 3 * A)), gh_a = np.empty((B, 3 * A))
    cdef double[:, ::1] gx_d = np.empty((B, 3 * Dh)), gh_d = np.empty((B, 3 * Dh))
    rz_a, n_a = np.empty((B, 2 * A)), np.empty((B, A))
    rz_d, n_d = np.empty((B, 2 * Dh)), np.empty((B, Dh))
    cdef double[:, ::1] q = np.empty((B, Att))
    cdef double[:, ::1] zero_a = np.zeros((B, A)), zero_d = np.zeros((B, Dh))
    cdef double[:, ::1] x, pa, po, wmat, keep
    cdef double[::1] bias
    for t in range(T):
        if t > 0:
            for b in range(B):
                if use_real[t, b] and have_tgt:
                    for j in range(F):
                        prev[t, b, j] = tgt[b, t - 1, j]
                else:
                    for j in range(F):
                        prev[t, b, j] = frames[t - 1, b, j]
        x = prev[t]
        n_in = F
        for i in range(L):
            wmat = W.prenet_w[i]
            bias = W.prenet_b[i]
            keep = keeps[i][t]
            pa = cache["pre_a"][i][t]
            po = cache["pre_out"][i][t]
            width = widths[i]
            _mm(False, False, B, width, n_in, &x[0, 0], n_in, &wmat[0, 0], width, 0.0,
                &pa[0, 0], width)
            for b in range(B):
                for j in range(width):
                    pa[b, j] = pa[b, j] + bias[j]
                    po[b, j] = (pa[b, j] if pa[b, j] > 0.0 else 0.0) * keep[b, j]
            x = po
            n_in = width
        for b in range(B):
            for j in range(P):
                a_in[t, b, j] = x[b, j]
            for j in range(M):
                a_in[t, b, P + j] = ctxs[t - 1, b, j] if t > 0 else 0.0
            for j in range(A):
                a_h0[t, b, j] = a_hs[t - 1, b, j] if t > 0 else 0.0
        _gru_fwd(a_in[t], a_h0[t], a_wx, a_wh, a_bx, a_bh, gx_a, gh_a, rz_a, n_a,
                 a_gates[t], a_hs[t])
        _mm(False, False, B, Att, A, &a_hs[t, 0, 0], A, &wq[0, 0], Att, 0.0, &q[0, 0], Att)
        _attn_fwd(q, keys, memory, v, ok, th_all[t], ws[t], ctxs[t])
        for b in range(B):
            for j in range(A):
                d_in[t, b, j] = a_hs[t, b, j]
            for j in range(M):
                d_in[t, b, A + j] = ctxs[t, b, j]
            for j in range(Dh):
                d_h0[t, b, j] = d_hs[t - 1, b, j] if t > 0 else 0.0
        _gru_fwd(d_in[t], d_h0[t], d_wx, d_wh, d_bx, d_bh, gx_d, gh_d, rz_d, n_d,
                 d_gates[t], d_hs[t])
        for b in range(B):
            for j in range(Dh):
                o_in[t, b, j] = d_hs[t, b, j]
            for j in range(M):
                o_in[t, b, Dh + j] = ctxs[t, b, j]
        _mm(False, False, B, F, Dh + M, &o_in[t, 0, 0], Dh + M, &pw[0, 0], F, 0.0,
            &frames[t, 0, 0], F)
        for b in range(B):
            for j in range(F):
                frames[t, b, j] += pb[j]
    traj = np.concatenate([cache["frame"], cache["a_h"], cache["d_h"]], axis=2).transpose(1, 0, 2)
    return np.ascontiguousarray(traj), np.ascontiguousarray(cache["w"].transpose(1, 0, 2)), cache


def decoder_backward(dtraj_arr, W, double[:, :, ::1] memory, double[:, :, ::1] keys, valid,
                     use_real_arr, keeps, cache):
    cdef cnp.uint8_t[:, ::1] use_real = use_real_arr.view(np.uint8)
    cdef int T = use_real.shape[0], B = use_real.shape[1]
    cdef int S = memory.shape[1], M = memory.shape[2], Att = keys.shape[2]
    cdef int F = W.proj_b.shape[0], A = W.arnn_wh.shape[0], Dh = W.drnn_wh.shape[0]
    cdef int L = len(W.prenet_w)
    cdef list widths = [w.shape[1] for w in W.prenet_w]
    cdef int P = widths[L - 1]
    cdef int t, b, j, i, width, n_in
    cdef double[:, :, ::1] dtraj = np.ascontiguousarray(dtraj_arr.transpose(1, 0, 2))
    cdef double[:, :, ::1] prev = cache["prev"], a_in = cache["a_in"], a_h0 = cache["a_h0"]
    cdef double[:, :, ::1] a_hs = cache["a_h"], ws = cache["w"]
    cdef double[:, :, ::1] d_in = cache["d_in"], d_h0 = cache["d_h0"]
    cdef double[:, :, ::1] o_in = cache["o_in"]
    cdef double[:, :, :, ::1] a_gates = cache["a_gates"], d_gates = cache["d_gates"]
    cdef double[:, :, :, ::1] ths = cache["th"]
    cdef double[:, ::1] a_wx = W.arnn_wx, a_wh = W.arnn_wh, d_wx = W.drnn_wx, d_wh = W.drnn_wh
    cdef double[:, ::1] wq = W.wq, pw = W.proj_w
    cdef double[::1] v = W.v

    g = {name: np.zeros_like(getattr(W, name)) for name in W._fields
         if name not in ("prenet_w", "prenet_b")}
    g_pw = [np.zeros_like(w) for w in W.prenet_w]
    g_pb = [np.zeros_like(pbias) for pbias in W.prenet_b]
    cdef double[:, ::1] gpw_proj = g["proj_w"], g_wq = g["wq"]
    cdef double[::1] gpb_proj = g["proj_b"], g_v = g["v"]
    cdef double[:, ::1] g_awx = g["arnn_wx"], g_awh = g["arnn_wh"]
    cdef double[::1] g_abx = g["arnn_bx"], g_abh = g["arnn_bh"]
    cdef double[:, ::1] g_dwx = g["drnn_wx"], g_dwh = g["drnn_wh"]
    cdef double[::1] g_dbx = g["drnn_bx"], g_dbh = g["drnn_bh"]
    dmemory_arr = np.zeros((B, S, M))
    dkeys_arr = np.zeros((B, S, Att))
    cdef double[:, :, ::1] dmemory = dmemory_arr, dkeys = dkeys_arr

    cdef double[:, ::1] gf = np.zeros((B, F)), carry_f = np.zeros((B, F))
    cdef double[:, ::1] g_ah = np.zeros((B, A)), g_dh = np.zeros((B, Dh))
    cdef double[:, ::1] g_ah_prev = np.zeros((B, A)), g_dh_prev = np.zeros((B, Dh))
    cdef double[:, ::1] g_ctx = np.zeros((B, M)), carry_ctx = np.zeros((B, M))
    cdef double[:, ::1] d_oin = np.zeros((B, Dh + M))
    cdef double[:, ::1] dx_d = np.zeros((B, A + M)), dx_a = np.zeros((B, P + M))
    cdef double[:, ::1] dgx_a = np.empty((B, 3 * A)), dgh_a = np.empty((B, 3 * A))
    cdef double[:, ::1] dgx_d = np.empty((B, 3 * Dh)), dgh_d = np.empty((B, 3 * Dh))
    cdef double[:, ::1] dq = np.zeros((B, Att))
    cdef double[::1] dw_scratch = np.empty(S)
    cdef double[:, ::1] gx, ga, inp, wmat, keep, pa, gwmat
    cdef double[::1] gbias
    gx_bufs = [np.zeros((B, w)) for w in widths]
    ga_bufs = [np.zeros((B, w)) for w in widths]
    cdef double[:, ::1] gprev = np.zeros((B, F))

    for t in range(T - 1, -1, -1):
        for b in range(B):
            for j in range(F):
                gf[b, j] = dtraj[t, b, j] + carry_f[b, j]
            for j in range(A):
                g_ah[b, j] = g_ah_prev[b, j] + dtraj[t, b, F + j]
            for j in range(Dh):
                g_dh[b, j] = g_dh_prev[b, j] + dtraj[t, b, F + A + j]
            for j in range(F):
                gpb_proj[j] += gf[b, j]
        _mm(True, False, Dh + M, F, B, &o_in[t, 0, 0], Dh + M, &gf[0, 0], F, 1.0,
            &gpw_proj[0, 0], F)
        _mm(False, True, B, Dh + M, F, &gf[0, 0], F, &pw[0, 0], F, 0.0, &d_oin[0, 0], Dh + M)
        for b in range(B):
            for j in range(Dh):
                g_dh[b, j] += d_oin[b, j]
            for j in range(M):
                g_ctx[b, j] = d_oin[b, Dh + j] + carry_ctx[b, j]
        _gru_bwd(g_dh, d_in[t], d_h0[t], d_wx, d_wh, d_gates[t], dgx_d, dgh_d, dx_d, g_dh_prev,
                 g_dwx, g_dwh, g_dbx, g_dbh, 1.0)
        for b in range(B):
            for j in range(A):
                g_ah[b, j] += dx_d[b, j]
            for j in range(M):
                g_ctx[b, j] += dx_d[b, A + j]
        _attn_bwd(g_ctx, ws[t], ths[t], memory, v, dq, dkeys, dmemory, g_v, dw_scratch)
        _mm(True, False, A, Att, B, &a_hs[t, 0, 0], A, &dq[0, 0], Att, 1.0, &g_wq[0, 0], Att)
        _mm(False, True, B, A, Att, &dq[0, 0], Att, &wq[0, 0], Att, 1.0, &g_ah[0, 0], A)
        _gru_bwd(g_ah, a_in[t], a_h0[t], a_wx, a_wh, a_gates[t], dgx_a, dgh_a, dx_a, g_ah_prev,
                 g_awx, g_awh, g_abx, g_abh, 1.0)
        for b in range(B):
            for j in range(M):
                carry_ctx[b, j] = dx_a[b, P + j]
        gx = gx_bufs[L - 1]
        for b in range(B):
            for j in range(P):
                gx[b, j] = dx_a[b, j]
        for i in range(L - 1, -1, -1):
            width = widths[i]
            n_in = widths[i - 1] if i > 0 else F
            keep = keeps[i][t]
            pa = cache["pre_a"][i][t]
            ga = ga_bufs[i]
            for b in range(B):
                for j in range(width):
                    ga[b, j] = gx[b, j] * keep[b, j] if pa[b, j] > 0.0 else 0.0
            inp = cache["pre_out"][i - 1][t] if i > 0 else prev[t]
            gwmat = g_pw[i]
            gbias = g_pb[i]
            wmat = W.prenet_w[i]
            _mm(True, False, n_in, width, B, &inp[0, 0], n_in, &ga[0, 0], width, 1.0,
                &gwmat[0, 0], width)
            for b in range(B):
                for j in range(width):
                    gbias[j] += ga[b, j]
            gx = gx_bufs[i - 1] if i > 0 else gprev
            _mm(False, True, B, n_in, width, &ga[0, 0], width, &wmat[0, 0], width, 0.0,
                &gx[0, 0], n_in)
        for b in range(B):
            for j in range(F):
                carry_f[b, j] = 0.0 if (t == 0 or use_real[t, b]) else gprev[b, j]
    grads = W._replace(prenet_w=g_pw, prenet_b=g_pb, **g)
    return grads, dmemory_arr, dkeys_arr
