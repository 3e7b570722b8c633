"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and update order; used when the extension is unavailable or
``CFSAMPLING_PURE_PYTHON`` is set. Each epoch function mutates the parameter
arrays in place and returns the summed pre-update loss.
"""
from __future__ import annotations

import math

import numpy as np


def _softplus_neg(x: float) -> float:
    # -log(sigmoid(x))
    if x > 0:
        return math.log1p(math.exp(-x))
    return -x + math.log1p(math.exp(x))


def _sigmoid_neg(x: float) -> float:
    # sigmoid(-x)
    if x >= 0:
        z = math.exp(-x)
        return z / (1.0 + z)
    return 1.0 / (1.0 + math.exp(x))


def mse_epoch(users, items, ratings, order, alpha, bu, bi, P, Q, lr, reg):
    total = 0.0
    two_reg = 2.0 * reg
    for n in order:
        u = users[n]
        i = items[n]
        pu = P[u].copy()
        qi = Q[i].copy()
        pred = alpha[0] + bu[u] + bi[i] + float(pu @ qi)
        e = pred - ratings[n]
        g = 2.0 * e
        total += e * e
        alpha[0] -= lr * g
        bu[u] -= lr * (g + two_reg * bu[u])
        bi[i] -= lr * (g + two_reg * bi[i])
        P[u] -= lr * (g * qi + two_reg * pu)
        Q[i] -= lr * (g * pu + two_reg * qi)
    return total


def bpr_epoch(users, pos, neg, order, bi, P, Q, lr, reg):
    total = 0.0
    two_reg = 2.0 * reg
    for n in order:
        u = users[n]
        i = pos[n]
        j = neg[n]
        pu = P[u].copy()
        qi = Q[i].copy()
        qj = Q[j].copy()
        x = bi[i] - bi[j] + float(pu @ qi) - float(pu @ qj)
        total += _softplus_neg(x)
        g = -_sigmoid_neg(x)
        bi[i] -= lr * (g + two_reg * bi[i])
        bi[j] -= lr * (-g + two_reg * bi[j])
        P[u] -= lr * (g * (qi - qj) + two_reg * pu)
        Q[i] -= lr * (g * pu + two_reg * qi)
        Q[j] -= lr * (-g * pu + two_reg * qj)
    return total


def _mlp_forward(pu, qi, W1, b1, w2, b2, mask):
    x = np.concatenate([pu, qi, pu * qi])
    a = W1 @ x + b1
    z = np.maximum(a, 0.0)
    if mask is not None:
        z = z * mask
    return x, a, z, float(w2 @ z) + b2[0]


def _mlp_backward(g, pu, qi, x, a, z, W1, w2, mask):
    d = len(pu)
    dz = g * w2
    da = dz * (a > 0)
    if mask is not None:
        da = da * mask
    dx = W1.T @ da
    dpu = dx[:d] + dx[2 * d:] * qi
    dqi = dx[d:2 * d] + dx[2 * d:] * pu
    return np.outer(da, x), da, g * z, dpu, dqi


def neumf_mse_epoch(users, items, ratings, order, alpha, bu, bi, P, Q,
                    W1, b1, w2, b2, mask, lr, reg):
    total = 0.0
    two_reg = 2.0 * reg
    use_mask = mask.shape[0] > 0
    for n in order:
        u = users[n]
        i = items[n]
        m = mask[n] if use_mask else None
        pu = P[u].copy()
        qi = Q[i].copy()
        x, a, z, f = _mlp_forward(pu, qi, W1, b1, w2, b2, m)
        e = alpha[0] + bu[u] + bi[i] + f - ratings[n]
        g = 2.0 * e
        total += e * e
        dW1, db1, dw2, dpu, dqi = _mlp_backward(g, pu, qi, x, a, z, W1, w2, m)
        alpha[0] -= lr * g
        bu[u] -= lr * (g + two_reg * bu[u])
        bi[i] -= lr * (g + two_reg * bi[i])
        P[u] -= lr * (dpu + two_reg * pu)
        Q[i] -= lr * (dqi + two_reg * qi)
        W1 -= lr * dW1
        b1 -= lr * db1
        w2 -= lr * dw2
        b2[0] -= lr * g
    return total


def neumf_bpr_epoch(users, pos, neg, order, bi, P, Q, W1, b1, w2, b2,
                    mask_pos, mask_neg, lr, reg):
    total = 0.0
    two_reg = 2.0 * reg
    use_mask = mask_pos.shape[0] > 0
    for n in order:
        u = users[n]
        i = pos[n]
        j = neg[n]
        mi = mask_pos[n] if use_mask else None
        mj = mask_neg[n] if use_mask else None
        pu = P[u].copy()
        qi = Q[i].copy()
        qj = Q[j].copy()
        xi, ai, zi, fi = _mlp_forward(pu, qi, W1, b1, w2, b2, mi)
        xj, aj, zj, fj = _mlp_forward(pu, qj, W1, b1, w2, b2, mj)
        x = bi[i] + fi - bi[j] - fj
        total += _softplus_neg(x)
        g = -_sigmoid_neg(x)
        dW1i, db1i, dw2i, dpu_i, dqi = _mlp_backward(g, pu, qi, xi, ai, zi, W1, w2, mi)
        dW1j, db1j, dw2j, dpu_j, dqj = _mlp_backward(-g, pu, qj, xj, aj, zj, W1, w2, mj)
        bi[i] -= lr * (g + two_reg * bi[i])
        bi[j] -= lr * (-g + two_reg * bi[j])
        P[u] -= lr * (dpu_i + dpu_j + two_reg * pu)
        Q[i] -= lr * (dqi + two_reg * qi)
        Q[j] -= lr * (dqj + two_reg * qj)
        W1 -= lr * (dW1i + dW1j)
        b1 -= lr * (db1i + db1j)
        w2 -= lr * (dw2i + dw2j)
    return total


def pairwise_auc(users, pos, negs, bi, P, Q):
    """Fraction of each row's negatives scored strictly below its positive."""
    n, k = negs.shape
    out = np.empty(n)
    step = max(1, 2_000_000 // max(1, k * max(1, P.shape[1])))
    for start in range(0, n, step):
        sl = slice(start, start + step)
        u = users[sl]
        pu = P[u]
        s_pos = bi[pos[sl]] + np.einsum("nd,nd->n", pu, Q[pos[sl]])
        nj = negs[sl]
        s_neg = bi[nj] + np.einsum("nd,nkd->nk", pu, Q[nj])
        out[sl] = (s_pos[:, None] > s_neg).sum(axis=1) / k
    return out
