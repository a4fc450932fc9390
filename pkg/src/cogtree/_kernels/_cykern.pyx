# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the numpy kernels (see numpy_impl.py for the shared
conventions). Straight C loops; worthwhile because the scorer head is tiny
and per-call numpy overhead dominates the pure path inside training and
gradient-check loops."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt, tanh

cnp.import_array()


def head_forward(double[:, ::1] W1, double[::1] b1, double[:, ::1] W2,
                 double[::1] b2, double[::1] e):
    """Scorer forward pass. Returns (hidden, probs) as float64 arrays."""
    cdef Py_ssize_t h = W1.shape[0]
    cdef Py_ssize_t d = W1.shape[1]
    cdef cnp.ndarray[double, ndim=1] hidden = np.empty(h)
    cdef cnp.ndarray[double, ndim=1] probs = np.empty(3)
    cdef double[::1] hv = hidden
    cdef double[::1] pv = probs
    _hidden_into(W1, b1, e, hv)
    _probs_into(W2, b2, hv, pv)
    return hidden, probs


cdef void _hidden_into(double[:, ::1] W1, double[::1] b1, double[::1] e,
                       double[::1] out) noexcept:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(W1.shape[0]):
        acc = b1[i]
        for j in range(W1.shape[1]):
            acc += W1[i, j] * e[j]
        out[i] = tanh(acc)


cdef void _probs_into(double[:, ::1] W2, double[::1] b2, double[::1] hidden,
                      double[::1] out) noexcept:
    cdef Py_ssize_t i, j
    cdef double acc, top, total
    for i in range(3):
        acc = b2[i]
        for j in range(hidden.shape[0]):
            acc += W2[i, j] * hidden[j]
        out[i] = acc
    top = out[0]
    if out[1] > top:
        top = out[1]
    if out[2] > top:
        top = out[2]
    total = 0.0
    for i in range(3):
        out[i] = exp(out[i] - top)
        total += out[i]
    for i in range(3):
        out[i] /= total


def cosine_scores(double[:, ::1] mat, double[::1] q):
    """Cosine similarity of each row of `mat` against `q` (no clamping)."""
    cdef Py_ssize_t n = mat.shape[0]
    cdef Py_ssize_t d = mat.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    cdef double dot, nrm, qn
    qn = 0.0
    for j in range(d):
        qn += q[j] * q[j]
    qn = sqrt(qn)
    for i in range(n):
        dot = 0.0
        nrm = 0.0
        for j in range(d):
            dot += mat[i, j] * q[j]
            nrm += mat[i, j] * mat[i, j]
        ov[i] = dot / (sqrt(nrm) * qn)
    return out


def head_loss_grad(double[:, ::1] W1, double[::1] b1, double[:, ::1] W2,
                   double[::1] b2, double[::1] anchor, int label,
                   double[:, ::1] negatives, positive, double lam, double tau):
    """Fused loss and analytic gradient for one training item.

    Returns (total, judgment, contrastive, gW1, gb1, gW2, gb2); matches
    numpy_impl.head_loss_grad.
    """
    cdef Py_ssize_t h = W1.shape[0]
    cdef Py_ssize_t d = W1.shape[1]
    cdef Py_ssize_t m = negatives.shape[0]
    cdef Py_ssize_t i, j, k

    cdef cnp.ndarray[double, ndim=2] gW1 = np.zeros((h, d))
    cdef cnp.ndarray[double, ndim=1] gb1 = np.zeros(h)
    cdef cnp.ndarray[double, ndim=2] gW2 = np.zeros((3, h))
    cdef cnp.ndarray[double, ndim=1] gb2 = np.zeros(3)
    cdef double[:, ::1] gW1v = gW1
    cdef double[::1] gb1v = gb1
    cdef double[:, ::1] gW2v = gW2
    cdef double[::1] gb2v = gb2

    cdef cnp.ndarray[double, ndim=1] v_arr = np.empty(h)
    cdef cnp.ndarray[double, ndim=1] p_arr = np.empty(3)
    cdef double[::1] v = v_arr
    cdef double[::1] probs = p_arr
    _hidden_into(W1, b1, anchor, v)
    _probs_into(W2, b2, v, probs)

    cdef double judgment = -log(probs[label])
    cdef cnp.ndarray[double, ndim=1] gv_arr = np.zeros(h)
    cdef double[::1] g_v = gv_arr
    cdef double dl

    if lam != 0.0:
        for i in range(3):
            dl = probs[i] - (1.0 if i == label else 0.0)
            dl *= lam
            gb2v[i] += dl
            for j in range(h):
                gW2v[i, j] += dl * v[j]
                g_v[j] += W2[i, j] * dl

    cdef double contrastive = 0.0
    cdef double[::1] pos_emb
    cdef cnp.ndarray[double, ndim=1] y_arr
    cdef cnp.ndarray[double, ndim=2] u_arr
    cdef double[::1] y
    cdef double[:, ::1] u
    cdef double nv, ny, sv, sy, c_pos, s_pos, top, z, e_pos, w
    cdef double coef, acc, dzv
    cdef cnp.ndarray[double, ndim=1] cneg_arr, nn_arr, eneg_arr
    cdef double[::1] c_neg, nn, e_neg

    if m > 0:
        if positive is None:
            pos_emb = anchor
        else:
            pos_emb = np.ascontiguousarray(positive, dtype=np.float64)
        y_arr = np.empty(h)
        y = y_arr
        _hidden_into(W1, b1, pos_emb, y)
        u_arr = np.empty((m, h))
        u = u_arr
        for k in range(m):
            _hidden_into(W1, b1, negatives[k], u[k])

        nv = 0.0
        ny = 0.0
        c_pos = 0.0
        for j in range(h):
            nv += v[j] * v[j]
            ny += y[j] * y[j]
            c_pos += v[j] * y[j]
        sv = sqrt(nv)
        sy = sqrt(ny)
        c_pos /= sv * sy
        s_pos = c_pos / tau

        cneg_arr = np.empty(m)
        nn_arr = np.empty(m)
        eneg_arr = np.empty(m)
        c_neg = cneg_arr
        nn = nn_arr
        e_neg = eneg_arr
        top = s_pos
        for k in range(m):
            acc = 0.0
            nn[k] = 0.0
            for j in range(h):
                acc += v[j] * u[k, j]
                nn[k] += u[k, j] * u[k, j]
            c_neg[k] = acc / (sv * sqrt(nn[k]))
            if c_neg[k] / tau > top:
                top = c_neg[k] / tau
        e_pos = exp(s_pos - top)
        z = e_pos
        for k in range(m):
            e_neg[k] = exp(c_neg[k] / tau - top)
            z += e_neg[k]
        contrastive = log(z) + top - s_pos

        if lam != 1.0:
            w = 1.0 - lam
            # positive pair: d contrastive / d s_pos = e_pos/z - 1
            coef = w * (e_pos / z - 1.0) / tau
            for j in range(h):
                g_v[j] += coef * (y[j] / (sv * sy) - c_pos * v[j] / nv)
            # backprop y through tanh at pos_emb
            for j in range(h):
                dzv = coef * (v[j] / (sv * sy) - c_pos * y[j] / ny)
                dzv *= 1.0 - y[j] * y[j]
                gb1v[j] += dzv
                for i in range(d):
                    gW1v[j, i] += dzv * pos_emb[i]
            # negatives: d contrastive / d s_k = e_k/z
            for k in range(m):
                coef = w * (e_neg[k] / z) / tau
                for j in range(h):
                    g_v[j] += coef * (u[k, j] / (sv * sqrt(nn[k])) - c_neg[k] * v[j] / nv)
                for j in range(h):
                    dzv = coef * (v[j] / (sv * sqrt(nn[k])) - c_neg[k] * u[k, j] / nn[k])
                    dzv *= 1.0 - u[k, j] * u[k, j]
                    gb1v[j] += dzv
                    for i in range(d):
                        gW1v[j, i] += dzv * negatives[k, i]

    # backprop the anchor hidden through tanh
    for j in range(h):
        dzv = g_v[j] * (1.0 - v[j] * v[j])
        gb1v[j] += dzv
        for i in range(d):
            gW1v[j, i] += dzv * anchor[i]

    cdef double total = lam * judgment + (1.0 - lam) * contrastive
    return total, judgment, contrastive, gW1, gb1, gW2, gb2
