"""Loop-by-loop transcription of one Hydra game, used only as a test oracle.

Nothing here is vectorized and nothing is shared with :mod:`hydranet.hydra`
beyond the configuration object; every sum is an explicit Python loop.
"""

from __future__ import annotations

import math

import numpy as np

from .hydra import HydraConfig


def _softplus(v: float) -> float:
    return max(v, 0.0) + math.log1p(math.exp(-abs(v)))


def _sigmoid(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def _matvec_rows(rows, W, bias=None):
    n_out = len(W[0])
    out = []
    for row in rows:
        acc = [0.0 if bias is None else bias[j] for j in range(n_out)]
        for k, v in enumerate(row):
            if v == 0.0:
                continue
            Wk = W[k]
            for j in range(n_out):
                acc[j] += v * Wk[j]
        out.append(acc)
    return out


def _attend(Q, K, V, scale):
    n = len(Q)
    width = len(V[0])
    out = []
    for t in range(n):
        logits = []
        for u in range(t + 1):  # causal
            logits.append(sum(Q[t][i] * K[u][i] for i in range(len(Q[t]))) * scale)
        top = max(logits)
        weights = [math.exp(v - top) for v in logits]
        total = sum(weights)
        row = [0.0] * width
        for u, wgt in enumerate(weights):
            for i in range(width):
                row[i] += wgt / total * V[u][i]
        out.append(row)
    return out


def naive_mssd_reference(points, momentum, params: dict, cfg: HydraConfig) -> np.ndarray:
    """Full ``(1 + L, d)`` output of one game.

    ``params`` maps unprefixed names (``"in_proj.weight"``, ``"A_log"``, ...)
    to numpy arrays.
    """
    if cfg.stride != 1 or cfg.window != 2:
        raise ValueError("the reference covers the overlapping two-step window only")
    P = {k: np.asarray(v, dtype=float).tolist() for k, v in params.items()}
    H, Pd, Di, Ds = cfg.heads, cfg.head_dim, cfg.d_inner, cfg.d_state

    G = [list(map(float, momentum))] + [list(map(float, r)) for r in points]
    n_seq = len(G)
    n_win = n_seq - 1

    proj = _matvec_rows(G, P["in_proj.weight"], P["in_proj.bias"])
    z = [[proj[t][i] for i in range(Di)] for t in range(n_seq)]
    x = [[[proj[t][Di + h * Pd + q] for q in range(Pd)] for h in range(H)] for t in range(n_seq)]
    Bm = [[proj[t][2 * Di + k] for k in range(Ds)] for t in range(n_seq)]
    Cm = [[proj[t][2 * Di + Ds + k] for k in range(Ds)] for t in range(n_seq)]
    dt = [[proj[t][2 * Di + 2 * Ds + h] for h in range(H)] for t in range(n_seq)]

    A = [
        [-math.exp(P["A_log"][h]) * _softplus(dt[t][h] + P["dt_bias"][h]) for h in range(H)]
        for t in range(n_seq)
    ]

    # window n holds sequence positions n and n + 1
    def pos(n, s):
        return n + s

    S = 2
    y_diag = [[[[0.0] * Pd for _ in range(H)] for _ in range(S)] for _ in range(n_win)]
    y_off = [[[[0.0] * Pd for _ in range(H)] for _ in range(S)] for _ in range(n_win)]
    a_cum = [[[0.0] * S for _ in range(n_win)] for _ in range(H)]
    states = [[[[0.0] * Ds for _ in range(Pd)] for _ in range(H)] for _ in range(n_win)]

    for n in range(n_win):
        for h in range(H):
            a = [A[pos(n, s)][h] for s in range(S)]
            run = 0.0
            for s in range(S):
                run += a[s]
                a_cum[h][n][s] = run
            for l in range(S):
                for s in range(l + 1):
                    seg = 0.0
                    for k in range(s + 1, l + 1):
                        seg += a[k]
                    cb = 0.0
                    for k in range(Ds):
                        cb += Cm[pos(n, l)][k] * Bm[pos(n, s)][k]
                    coef = cb * math.exp(seg)
                    for q in range(Pd):
                        y_diag[n][l][h][q] += coef * x[pos(n, s)][h][q]
            for s in range(S):
                decay = math.exp(a_cum[h][n][S - 1] - a_cum[h][n][s])
                for q in range(Pd):
                    xv = decay * x[pos(n, s)][h][q]
                    for k in range(Ds):
                        states[n][h][q][k] += Bm[pos(n, s)][k] * xv

    # padded end-of-window sums, then propagate through the chunk decay matrix
    carried = [[[[0.0] * Ds for _ in range(Pd)] for _ in range(H)] for _ in range(n_win)]
    for h in range(H):
        padded = [0.0] + [a_cum[h][n][S - 1] for n in range(n_win)]
        for zi in range(n_win):
            for c in range(zi + 1):
                if c == 0:
                    continue  # zero initial state
                seg = 0.0
                for k in range(c + 1, zi + 1):
                    seg += padded[k]
                f = math.exp(seg)
                src = states[c - 1][h]
                dst = carried[zi][h]
                for q in range(Pd):
                    for k in range(Ds):
                        dst[q][k] += f * src[q][k]

    for n in range(n_win):
        for l in range(S):
            for h in range(H):
                grow = math.exp(a_cum[h][n][l])
                for q in range(Pd):
                    acc = 0.0
                    for k in range(Ds):
                        acc += Cm[pos(n, l)][k] * carried[n][h][q][k]
                    y_off[n][l][h][q] = acc * grow

    def fold(win):
        seq = [win[0][0]] + [win[n][1] for n in range(n_win)]
        return [[v for h in range(H) for v in seq[t][h]] for t in range(n_seq)]

    yd = fold(y_diag)
    yo = fold(y_off)

    if cfg.fusion == "sum":
        fused = [[yd[t][i] + yo[t][i] for i in range(Di)] for t in range(n_seq)]
    else:
        scale = 1.0 / math.sqrt(Di)
        left = _attend(
            _matvec_rows(yd, P["fuse.q_diag"]), _matvec_rows(yo, P["fuse.k_off"]), _matvec_rows(yo, P["fuse.v_off"]), scale
        )
        right = _attend(
            _matvec_rows(yo, P["fuse.q_off"]), _matvec_rows(yd, P["fuse.k_diag"]), _matvec_rows(yd, P["fuse.v_diag"]), scale
        )
        fused = [[left[t][i] + right[t][i] for i in range(Di)] for t in range(n_seq)]

    normed = []
    for t in range(n_seq):
        row = list(fused[t])
        if cfg.residual:
            for h in range(H):
                for q in range(Pd):
                    row[h * Pd + q] += x[t][h][q] * P["D"][h]
        ms = sum(v * v for v in row) / Di
        rms = math.sqrt(ms + cfg.eps)
        out = []
        for i in range(Di):
            num = row[i]
            if cfg.gate:
                num *= z[t][i] * _sigmoid(z[t][i])
            out.append(num / rms * P["norm.weight"][i])
        normed.append(out)
    return np.array(_matvec_rows(normed, P["out_proj.weight"], P["out_proj.bias"]))
