"""Compiled per-frame inference step for causal streaming.

The arithmetic mirrors the offline graph: activations are rounded to float32
at the same points, normalization statistics and depthwise sums are float64.
Pointwise convolutions use float32 BLAS matrix-vector products, which is the
only place where streaming and offline results may differ (by rounding).
"""

import numpy as np
from numba import njit

EPS = 1e-8


@njit(cache=True)
def _cln(v, stats, site, k, gamma, beta, out):
    n = v.shape[0]
    s = 0.0
    s2 = 0.0
    lo = stats[site, 2]
    hi = stats[site, 3]
    for i in range(n):
        a = v[i]
        s += a
        s2 += a * a
        lo = min(lo, a)
        hi = max(hi, a)
    S1 = stats[site, 0] + s
    S2 = stats[site, 1] + s2
    stats[site, 0] = S1
    stats[site, 1] = S2
    stats[site, 2] = lo
    stats[site, 3] = hi
    cnt = float(n * k)
    mu = S1 / cnt
    var = S2 / cnt - mu * mu
    if var < 0.0:
        var = 0.0
    r = 1.0 / np.sqrt(var + EPS)
    flat = lo == hi
    for i in range(n):
        xh = 0.0 if flat else (v[i] - mu) * r
        out[i] = np.float32(xh * gamma[i] + beta[i])


@njit(cache=True)
def run_frames(x, n_frames, hop, encT, relu, in_g, in_b, bW, bb,
               W1, b1, a1, g1, be1, K, dil, a2, g2, be2, Wrs, brs,
               a_out, Wm, bm, softmax, V, hist, stats, counter, tail, out):
    L, N = encT.shape
    B = bW.shape[0]
    NB, H, _ = W1.shape
    P = K.shape[1]
    Sc = Wrs.shape[1] - B
    C = tail.shape[0]
    w32 = np.empty(N, np.float32)
    w64 = np.empty(N)
    xin = np.empty(N, np.float32)
    res = np.empty(B, np.float32)
    y64 = np.empty(H)
    y32 = np.empty(H, np.float32)
    z64 = np.empty(H)
    z32 = np.empty(H, np.float32)
    skip = np.empty(Sc, np.float32)
    m = np.empty(C * N, np.float32)
    frame_out = np.empty(L)
    acc = np.empty(H)
    slots = np.empty(max(P - 1, 1), np.int64)
    zero = np.float32(0.0)
    for f in range(n_frames):
        counter[0] += 1
        k = counter[0]
        t = k - 1
        base = f * hop
        for n in range(N):
            w64[n] = 0.0
        for j in range(L):
            xj = x[base + j]
            for n in range(N):
                w64[n] += encT[j, n] * xj
        for n in range(N):
            v = np.float32(w64[n])
            if relu and v < zero:
                v = zero
            w32[n] = v
            w64[n] = v
        _cln(w64, stats, 0, k, in_g, in_b, xin)
        r0 = np.dot(bW, xin)
        for i in range(B):
            res[i] = r0[i] + bb[i]
        for s in range(Sc):
            skip[s] = zero
        for bi in range(NB):
            t1 = np.dot(W1[bi], res)
            a = a1[bi]
            for h in range(H):
                v = t1[h] + b1[bi, h]
                if v < zero:
                    v = a * v
                y64[h] = v
            _cln(y64, stats, 1 + 2 * bi, k, g1[bi], be1[bi], y32)
            d = dil[bi]
            Lr = (P - 1) * d
            a = a2[bi]
            for j in range(P - 1):
                slots[j] = (t - (P - 1 - j) * d) % Lr
            for h in range(H):
                acc[h] = 0.0
            for j in range(P - 1):
                sl = slots[j]
                for h in range(H):
                    acc[h] += K[bi, j, h] * hist[bi, sl, h]
            for h in range(H):
                acc[h] += K[bi, P - 1, h] * y32[h]
                v = np.float32(acc[h])
                if v < zero:
                    v = a * v
                z64[h] = v
            if Lr > 0:
                slot = t % Lr
                for h in range(H):
                    hist[bi, slot, h] = y32[h]
            _cln(z64, stats, 2 + 2 * bi, k, g2[bi], be2[bi], z32)
            if bi < NB - 1:
                o = np.dot(Wrs[bi], z32)
                for i in range(B):
                    res[i] = res[i] + np.float32(o[i] + brs[bi, i])
                for s in range(Sc):
                    skip[s] = skip[s] + np.float32(o[B + s] + brs[bi, B + s])
            else:
                # the last residual output feeds nothing
                o = np.dot(Wrs[bi, B:], z32)
                for s in range(Sc):
                    skip[s] = skip[s] + np.float32(o[s] + brs[bi, B + s])
        for s in range(Sc):
            if skip[s] < zero:
                skip[s] = a_out * skip[s]
        lg = np.dot(Wm, skip)
        for i in range(C * N):
            m[i] = lg[i] + bm[i]
        if softmax:
            for n in range(N):
                mx = -np.inf
                for c in range(C):
                    if m[c * N + n] > mx:
                        mx = m[c * N + n]
                tot = 0.0
                for c in range(C):
                    tot += np.exp(np.float64(m[c * N + n]) - mx)
                for c in range(C):
                    m[c * N + n] = np.float32(np.exp(np.float64(m[c * N + n]) - mx) / tot)
        else:
            for i in range(C * N):
                m[i] = np.float32(1.0 / (1.0 + np.exp(-np.float64(m[i]))))
        for c in range(C):
            for j in range(L):
                frame_out[j] = 0.0
            for n in range(N):
                dv = np.float64(w32[n] * m[c * N + n])
                if dv != 0.0:
                    for j in range(L):
                        frame_out[j] += V[n, j] * dv
            for j in range(hop):
                out[c, base + j] = tail[c, j] + frame_out[j]
                tail[c, j] = frame_out[hop + j]
