# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SGD and proxy-AUC kernels. See ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()

ctypedef cnp.int64_t idx_t


cdef inline double _softplus_neg(double x) nogil:
    if x > 0:
        return log1p(exp(-x))
    return -x + log1p(exp(x))


cdef inline double _sigmoid_neg(double x) nogil:
    cdef double z
    if x >= 0:
        z = exp(-x)
        return z / (1.0 + z)
    return 1.0 / (1.0 + exp(x))


def mse_epoch(const idx_t[:] users, const idx_t[:] items, const double[:] ratings,
              const idx_t[:] order, double[:] alpha, double[:] bu, double[:] bi,
              double[:, :] P, double[:, :] Q, double lr, double reg):
    cdef Py_ssize_t n_steps = order.shape[0], d = P.shape[1]
    cdef Py_ssize_t s, k, n, u, i
    cdef double pred, e, g, pu, qi, total = 0.0, two_reg = 2.0 * reg
    with nogil:
        for s in range(n_steps):
            n = order[s]
            u = users[n]
            i = items[n]
            pred = alpha[0] + bu[u] + bi[i]
            for k in range(d):
                pred = pred + P[u, k] * Q[i, k]
            e = pred - ratings[n]
            g = 2.0 * e
            total += e * e
            alpha[0] -= lr * g
            bu[u] -= lr * (g + two_reg * bu[u])
            bi[i] -= lr * (g + two_reg * bi[i])
            for k in range(d):
                pu = P[u, k]
                qi = Q[i, k]
                P[u, k] = pu - lr * (g * qi + two_reg * pu)
                Q[i, k] = qi - lr * (g * pu + two_reg * qi)
    return total


def bpr_epoch(const idx_t[:] users, const idx_t[:] pos, const idx_t[:] neg,
              const idx_t[:] order, double[:] bi, double[:, :] P, double[:, :] Q,
              double lr, double reg):
    cdef Py_ssize_t n_steps = order.shape[0], d = P.shape[1]
    cdef Py_ssize_t s, k, n, u, i, j
    cdef double x, si, sj, g, pu, qi, qj, total = 0.0, two_reg = 2.0 * reg
    with nogil:
        for s in range(n_steps):
            n = order[s]
            u = users[n]
            i = pos[n]
            j = neg[n]
            si = 0.0
            sj = 0.0
            for k in range(d):
                si = si + P[u, k] * Q[i, k]
                sj = sj + P[u, k] * Q[j, k]
            x = bi[i] - bi[j] + si - sj
            total += _softplus_neg(x)
            g = -_sigmoid_neg(x)
            bi[i] -= lr * (g + two_reg * bi[i])
            bi[j] -= lr * (-g + two_reg * bi[j])
            for k in range(d):
                pu = P[u, k]
                qi = Q[i, k]
                qj = Q[j, k]
                P[u, k] = pu - lr * (g * (qi - qj) + two_reg * pu)
                Q[i, k] = qi - lr * (g * pu + two_reg * qi)
                Q[j, k] = qj - lr * (-g * pu + two_reg * qj)
    return total


cdef inline double _mlp_forward(Py_ssize_t u, Py_ssize_t i, double[:, :] P, double[:, :] Q,
                                double[:, :] W1, double[:] b1, double[:] w2, double b2,
                                const double[:, :] mask, Py_ssize_t row, bint use_mask,
                                double[:] x, double[:] a, double[:] z) nogil:
    cdef Py_ssize_t d = P.shape[1], H = W1.shape[0], h, k
    cdef double acc, f = 0.0
    for k in range(d):
        x[k] = P[u, k]
        x[d + k] = Q[i, k]
        x[2 * d + k] = P[u, k] * Q[i, k]
    for h in range(H):
        acc = 0.0
        for k in range(3 * d):
            acc = acc + W1[h, k] * x[k]
        acc = acc + b1[h]
        a[h] = acc
        z[h] = acc if acc > 0 else 0.0
        if use_mask:
            z[h] = z[h] * mask[row, h]
    for h in range(H):
        f = f + w2[h] * z[h]
    return f + b2


cdef inline void _mlp_backward(double g, double[:, :] W1, double[:] w2,
                               const double[:, :] mask, Py_ssize_t row, bint use_mask,
                               double[:] a, double[:] da, double[:] dx) nogil:
    # da = dL/da, dx = dL/dx (with the W1 values before this step's update)
    cdef Py_ssize_t H = W1.shape[0], D = W1.shape[1], h, k
    cdef double v
    for h in range(H):
        v = g * w2[h] if a[h] > 0 else 0.0
        if use_mask:
            v = v * mask[row, h]
        da[h] = v
    for k in range(D):
        v = 0.0
        for h in range(H):
            v = v + W1[h, k] * da[h]
        dx[k] = v


def neumf_mse_epoch(const idx_t[:] users, const idx_t[:] items, const double[:] ratings,
                    const idx_t[:] order, double[:] alpha, double[:] bu, double[:] bi,
                    double[:, :] P, double[:, :] Q, double[:, :] W1, double[:] b1,
                    double[:] w2, double[:] b2, const double[:, :] mask, double lr, double reg):
    cdef Py_ssize_t n_steps = order.shape[0], d = P.shape[1], H = W1.shape[0]
    cdef Py_ssize_t s, k, h, n, u, i
    cdef bint use_mask = mask.shape[0] > 0
    cdef double f, e, g, pu, qi, total = 0.0, two_reg = 2.0 * reg
    cdef double[:] x = np.empty(3 * d)
    cdef double[:] a = np.empty(H)
    cdef double[:] z = np.empty(H)
    cdef double[:] da = np.empty(H)
    cdef double[:] dx = np.empty(3 * d)
    with nogil:
        for s in range(n_steps):
            n = order[s]
            u = users[n]
            i = items[n]
            f = _mlp_forward(u, i, P, Q, W1, b1, w2, b2[0], mask, n, use_mask, x, a, z)
            e = alpha[0] + bu[u] + bi[i] + f - ratings[n]
            g = 2.0 * e
            total += e * e
            _mlp_backward(g, W1, w2, mask, n, use_mask, a, da, dx)
            alpha[0] -= lr * g
            bu[u] -= lr * (g + two_reg * bu[u])
            bi[i] -= lr * (g + two_reg * bi[i])
            for k in range(d):
                pu = x[k]
                qi = x[d + k]
                P[u, k] = pu - lr * (dx[k] + dx[2 * d + k] * qi + two_reg * pu)
                Q[i, k] = qi - lr * (dx[d + k] + dx[2 * d + k] * pu + two_reg * qi)
            for h in range(H):
                for k in range(3 * d):
                    W1[h, k] -= lr * (da[h] * x[k])
                b1[h] -= lr * da[h]
                w2[h] -= lr * (g * z[h])
            b2[0] -= lr * g
    return total


def neumf_bpr_epoch(const idx_t[:] users, const idx_t[:] pos, const idx_t[:] neg,
                    const idx_t[:] order, double[:] bi, double[:, :] P, double[:, :] Q,
                    double[:, :] W1, double[:] b1, double[:] w2, double[:] b2,
                    const double[:, :] mask_pos, const double[:, :] mask_neg,
                    double lr, double reg):
    cdef Py_ssize_t n_steps = order.shape[0], d = P.shape[1], H = W1.shape[0]
    cdef Py_ssize_t s, k, h, n, u, i, j
    cdef bint use_mask = mask_pos.shape[0] > 0
    cdef double fi, fj, xd, g, pu, qi, qj, total = 0.0, two_reg = 2.0 * reg
    cdef double[:] xi = np.empty(3 * d)
    cdef double[:] xj = np.empty(3 * d)
    cdef double[:] ai = np.empty(H)
    cdef double[:] aj = np.empty(H)
    cdef double[:] zi = np.empty(H)
    cdef double[:] zj = np.empty(H)
    cdef double[:] dai = np.empty(H)
    cdef double[:] daj = np.empty(H)
    cdef double[:] dxi = np.empty(3 * d)
    cdef double[:] dxj = np.empty(3 * d)
    with nogil:
        for s in range(n_steps):
            n = order[s]
            u = users[n]
            i = pos[n]
            j = neg[n]
            fi = _mlp_forward(u, i, P, Q, W1, b1, w2, b2[0], mask_pos, n, use_mask, xi, ai, zi)
            fj = _mlp_forward(u, j, P, Q, W1, b1, w2, b2[0], mask_neg, n, use_mask, xj, aj, zj)
            xd = bi[i] + fi - bi[j] - fj
            total += _softplus_neg(xd)
            g = -_sigmoid_neg(xd)
            _mlp_backward(g, W1, w2, mask_pos, n, use_mask, ai, dai, dxi)
            _mlp_backward(-g, W1, w2, mask_neg, n, use_mask, aj, daj, dxj)
            bi[i] -= lr * (g + two_reg * bi[i])
            bi[j] -= lr * (-g + two_reg * bi[j])
            for k in range(d):
                pu = xi[k]
                qi = xi[d + k]
                qj = xj[d + k]
                P[u, k] = pu - lr * ((dxi[k] + dxi[2 * d + k] * qi)
                                     + (dxj[k] + dxj[2 * d + k] * qj) + two_reg * pu)
                Q[i, k] = qi - lr * (dxi[d + k] + dxi[2 * d + k] * pu + two_reg * qi)
                Q[j, k] = qj - lr * (dxj[d + k] + dxj[2 * d + k] * pu + two_reg * qj)
            for h in range(H):
                for k in range(3 * d):
                    W1[h, k] -= lr * (dai[h] * xi[k] + daj[h] * xj[k])
                b1[h] -= lr * (dai[h] + daj[h])
                w2[h] -= lr * (g * zi[h] + (-g) * zj[h])
    return total


def pairwise_auc(const idx_t[:] users, const idx_t[:] pos, const idx_t[:, :] negs,
                 const double[:] bi, const double[:, :] P, const double[:, :] Q):
    cdef Py_ssize_t n_rows = negs.shape[0], K = negs.shape[1], d = P.shape[1]
    cdef Py_ssize_t r, c, k, u, i, j, hits
    cdef double sp, sn
    out = np.empty(n_rows)
    cdef double[:] res = out
    with nogil:
        for r in range(n_rows):
            u = users[r]
            i = pos[r]
            sp = 0.0
            for k in range(d):
                sp = sp + P[u, k] * Q[i, k]
            sp = bi[i] + sp
            hits = 0
            for c in range(K):
                j = negs[r, c]
                sn = 0.0
                for k in range(d):
                    sn = sn + P[u, k] * Q[j, k]
                sn = bi[j] + sn
                if sp > sn:
                    hits += 1
            res[r] = hits / <double>K
    return out
