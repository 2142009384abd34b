"""Independent reference implementations used only by the tests.

Everything here is plain numpy and Python loops with no use of the tape,
the adjacency index, or the batched model code.
"""

from __future__ import annotations

import numpy as np


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of one array."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


# ---- metrics -------------------------------------------------------------

def ap_bruteforce(scores, labels) -> float:
    """Mean over positives of the precision at that positive's rank.

    Rank counts strictly higher scores plus tied scores that appear earlier
    in the input (stable descending order).
    """
    s = list(map(float, scores))
    y = list(map(int, labels))
    n = len(s)
    rank = []
    for i in range(n):
        r = 1
        for j in range(n):
            if s[j] > s[i] or (s[j] == s[i] and j < i):
                r += 1
        rank.append(r)
    pos = [i for i in range(n) if y[i] == 1]
    total = 0.0
    for i in pos:
        hits = sum(1 for j in pos if rank[j] <= rank[i])
        total += hits / rank[i]
    return total / len(pos)


def auc_pairwise(scores, labels) -> float:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    wins = 0.0
    for a in s[y]:
        for b in s[~y]:
            wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (y.sum() * (~y).sum())


# ---- graph scans -------------------------------------------------------

def scan_before(src, dst, times, s, t):
    """(link_index, neighbor, time) of links touching ``s`` before ``t``, newest first."""
    out = []
    for i in range(len(times)):
        if (src[i] == s or dst[i] == s) and times[i] < t:
            out.append((i, dst[i] if src[i] == s else src[i], times[i]))
    out.sort(key=lambda r: (r[2], r[0]), reverse=True)
    return out


def scan_timeline(src, dst, times, s, t, k, n):
    """List of (ref_time, [(link_index, neighbor, time), ...]) oldest first, valid frames only."""
    half = k // 2
    hist = scan_before(src, dst, times, s, t)
    if not hist:
        return []
    frames = [(t, hist[:k])]
    while len(frames) < n and len(hist) >= half:
        t_prev = hist[half - 1][2]
        older = scan_before(src, dst, times, s, t_prev)
        if len(older) < half:
            break
        frames.append((t_prev, older[:k]))
        hist = older
    return frames[::-1]


# ---- model -------------------------------------------------------------

def time_features(P, dt):
    freq, phase = P["time.freq"], P["time.phase"]
    return np.sqrt(1.0 / len(freq)) * np.cos(freq * dt + phase)


def frame_oracle(P, heads, target_h, nbr_h, dts, feats):
    """One frame, written out row by row and head by head.

    Returns (representation, attention weights per head).
    """
    d_e = feats.shape[1] if len(feats) else P["attn.W_Q.0"].shape[0] - len(target_h) - len(P["time.freq"])
    z0 = np.concatenate([target_h, time_features(P, 0.0), np.zeros(d_e)])
    Z = np.array([np.concatenate([nbr_h[j], time_features(P, dts[j]), feats[j]]) for j in range(len(dts))])
    outs, alphas = [], []
    for r in range(heads):
        Wq, Wk, Wv = P[f"attn.W_Q.{r}"], P[f"attn.W_K.{r}"], P[f"attn.W_V.{r}"]
        q = z0 @ Wq
        K = Z @ Wk
        V = Z @ Wv
        logits = np.array([K[j] @ q for j in range(len(dts))]) / np.sqrt(len(q))
        e = np.exp(logits - logits.max())
        a = e / e.sum()
        alphas.append(a)
        outs.append(sum(a[j] * V[j] for j in range(len(dts))))
    y = np.concatenate([z0] + outs)
    hidden = np.maximum(y @ P["ffn.W_0"] + P["ffn.b_0"], 0.0)
    return hidden @ P["ffn.W_1"] + P["ffn.b_1"], np.array(alphas)


def embed_oracle(P, cfg, src, dst, times, feats, s, t, depth, node_features=None):
    """Plain recursive node embedding following the timeline definition."""
    d_h = cfg.hidden_dim
    if depth == 0:
        return np.zeros(d_h) if node_features is None else np.asarray(node_features[s], float)
    slots = scan_timeline(src, dst, times, s, t, cfg.frame_length, cfg.timeline_length)
    reps = [np.zeros(d_h)] * (cfg.timeline_length - len(slots))
    for ref, entries in slots:
        tgt = embed_oracle(P, cfg, src, dst, times, feats, s, ref, depth - 1, node_features)
        nbr = [embed_oracle(P, cfg, src, dst, times, feats, v, tt, depth - 1, node_features) for _, v, tt in entries]
        f = np.array([feats[i] for i, _, _ in entries]).reshape(len(entries), -1)
        rep, _ = frame_oracle(P, cfg.heads, tgt, nbr, [ref - tt for _, _, tt in entries], f)
        reps.append(rep)
    return np.concatenate(reps) @ P["timeline.W_2"] + P["timeline.b_2"]
