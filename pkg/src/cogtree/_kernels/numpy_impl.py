"""Pure-numpy implementations of the hot numeric kernels.

Mirrors the compiled extension (_cykern) function for function; results
agree to floating-point noise but not bitwise, because BLAS accumulates
sums in a different order than the C loops.

Conventions shared by both implementations:

* class axis order is (sure, likely, impossible) = (0, 1, 2);
* the scorer is probs = softmax(W2 @ tanh(W1 @ e + b1) + b2);
* the contrastive term compares hidden vectors by cosine similarity at
  temperature tau and is the negative log of the positive's softmax share:
  log(sum_j exp(s_j - s_pos) + 1) with s = cos/tau;
* when no separate positive embedding is given, the anchor's hidden vector
  doubles as the positive reference (its self-cosine is 1, so those partial
  gradients vanish);
* an empty negatives array makes the contrastive term exactly 0.
"""

from __future__ import annotations

import numpy as np


def head_forward(W1, b1, W2, b2, e):
    """Scorer forward pass. Returns (hidden, probs) as float64 arrays."""
    hidden = np.tanh(W1 @ e + b1)
    logits = W2 @ hidden + b2
    logits = logits - logits.max()
    expl = np.exp(logits)
    probs = expl / expl.sum()
    return hidden, probs


def cosine_scores(mat, q):
    """Cosine similarity of each row of `mat` against `q` (no clamping)."""
    norms = np.sqrt((mat * mat).sum(axis=1))
    qn = np.sqrt(q @ q)
    return (mat @ q) / (norms * qn)


def _cosine_pair(a, b):
    return (a @ b) / (np.sqrt(a @ a) * np.sqrt(b @ b))


def head_loss_grad(W1, b1, W2, b2, anchor, label, negatives, positive, lam, tau):
    """Fused loss and analytic gradient for one training item.

    Returns (total, judgment, contrastive, gW1, gb1, gW2, gb2) where
    total = lam * judgment + (1 - lam) * contrastive.

    `negatives` is an (m, d) array, m possibly 0. `positive` is a d-vector
    or None (anchor doubles as positive reference).
    """
    h = W1.shape[0]
    gW1 = np.zeros_like(W1)
    gb1 = np.zeros_like(b1)
    gW2 = np.zeros_like(W2)
    gb2 = np.zeros_like(b2)

    v_hidden, probs = head_forward(W1, b1, W2, b2, anchor)
    with np.errstate(divide="ignore"):  # prob 0 -> inf loss, caught by callers
        judgment = -np.log(probs[label])

    # d judgment / d logits = probs - onehot(label)
    if lam != 0.0:
        dlogits = probs.copy()
        dlogits[label] -= 1.0
        dlogits *= lam
        gW2 += np.outer(dlogits, v_hidden)
        gb2 += dlogits
        g_v = W2.T @ dlogits
    else:
        g_v = np.zeros(h)

    m = 0 if negatives is None else negatives.shape[0]
    contrastive = 0.0
    if m > 0:
        pos_emb = anchor if positive is None else positive
        y_hidden = np.tanh(W1 @ pos_emb + b1)
        neg_hidden = np.tanh(negatives @ W1.T + b1)  # (m, h)

        c_pos = _cosine_pair(v_hidden, y_hidden)
        c_neg = cosine_scores(neg_hidden, v_hidden)
        s_pos = c_pos / tau
        s_neg = c_neg / tau

        top = max(s_pos, s_neg.max())
        e_pos = np.exp(s_pos - top)
        e_neg = np.exp(s_neg - top)
        z = e_pos + e_neg.sum()
        contrastive = np.log(z) + top - s_pos

        if lam != 1.0:
            w = 1.0 - lam
            p_pos = e_pos / z
            p_neg = e_neg / z
            # d contrastive / d s_pos = p_pos - 1 ; / d s_j = p_j
            nv = v_hidden @ v_hidden
            ny = y_hidden @ y_hidden
            sv = np.sqrt(nv)
            coef_pos = w * (p_pos - 1.0) / tau
            g_v_cl = coef_pos * (y_hidden / (sv * np.sqrt(ny)) - c_pos * v_hidden / nv)
            g_y = coef_pos * (v_hidden / (sv * np.sqrt(ny)) - c_pos * y_hidden / ny)

            nn = (neg_hidden * neg_hidden).sum(axis=1)
            coef_neg = (w * p_neg / tau)[:, None]
            denom = (sv * np.sqrt(nn))[:, None]
            g_v_cl += (coef_neg * (neg_hidden / denom - (c_neg / nv)[:, None] * v_hidden)).sum(axis=0)
            g_u = coef_neg * (v_hidden / denom - (c_neg / nn)[:, None] * neg_hidden)

            g_v += g_v_cl
            dz_y = g_y * (1.0 - y_hidden * y_hidden)
            gW1 += np.outer(dz_y, pos_emb)
            gb1 += dz_y
            dz_u = g_u * (1.0 - neg_hidden * neg_hidden)
            gW1 += dz_u.T @ negatives
            gb1 += dz_u.sum(axis=0)

    dz_v = g_v * (1.0 - v_hidden * v_hidden)
    gW1 += np.outer(dz_v, anchor)
    gb1 += dz_v

    total = lam * judgment + (1.0 - lam) * contrastive
    return total, float(judgment), float(contrastive), gW1, gb1, gW2, gb2
