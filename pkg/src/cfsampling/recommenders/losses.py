"""Batch losses with analytic gradients.

Each loss is the mean over the batch of a per-sample loss; the per-sample
terms are exactly what the SGD kernels descend. The L2 penalty covers the
biases and factors a sample touches; MLP weights are not penalised.
"""
from __future__ import annotations

import numpy as np

from .models import Algorithm, ModelParams


def _zeros_like(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.arrays().items()}


def _softplus_neg(x):
    return np.logaddexp(0.0, -x)


def _sigmoid_neg(x):
    return 0.5 * (1.0 - np.tanh(0.5 * x))


def _mlp(params, pu, qi, mask):
    x = np.concatenate([pu, qi, pu * qi], axis=1)
    a = x @ params.W1.T + params.b1
    z = np.maximum(a, 0.0)
    if mask is not None:
        z = z * mask
    return x, a, z, z @ params.w2 + params.b2[0]


def _mlp_back(params, g, pu, qi, x, a, z, mask, grads, users, items):
    d = params.d
    da = (g[:, None] * params.w2[None, :]) * (a > 0)
    if mask is not None:
        da = da * mask
    dx = da @ params.W1
    grads["W1"] += da.T @ x
    grads["b1"] += da.sum(axis=0)
    grads["w2"] += z.T @ g
    np.add.at(grads["gamma_u"], users, dx[:, :d] + dx[:, 2 * d:] * qi)
    np.add.at(grads["gamma_i"], items, dx[:, d:2 * d] + dx[:, 2 * d:] * pu)


def mse_loss(params: ModelParams, users, items, ratings, reg: float = 1e-4, mask=None):
    """Mean of ``(r_hat - r)^2 + reg * ||touched params||^2`` and its gradient."""
    if params.algorithm is Algorithm.POPREC:
        raise ValueError("PopRec has no trainable loss")
    users = np.asarray(users)
    items = np.asarray(items)
    n = len(users)
    grads = _zeros_like(params)
    pu = params.gamma_u[users]
    qi = params.gamma_i[items]
    pred = params.alpha[0] + params.beta_u[users] + params.beta_i[items]
    if params.algorithm is Algorithm.MF:
        pred = pred + np.einsum("nd,nd->n", pu, qi)
    elif params.algorithm is Algorithm.NEUMF:
        x, a, z, f = _mlp(params, pu, qi, mask)
        pred = pred + f
    e = pred - np.asarray(ratings)
    penalty = (params.beta_u[users] ** 2 + params.beta_i[items] ** 2
               + (pu ** 2).sum(axis=1) + (qi ** 2).sum(axis=1))
    loss = float(np.mean(e ** 2 + reg * penalty))
    g = 2.0 * e
    grads["alpha"][0] = g.sum()
    np.add.at(grads["beta_u"], users, g + 2 * reg * params.beta_u[users])
    np.add.at(grads["beta_i"], items, g + 2 * reg * params.beta_i[items])
    np.add.at(grads["gamma_u"], users, 2 * reg * pu)
    np.add.at(grads["gamma_i"], items, 2 * reg * qi)
    if params.algorithm is Algorithm.MF:
        np.add.at(grads["gamma_u"], users, g[:, None] * qi)
        np.add.at(grads["gamma_i"], items, g[:, None] * pu)
    elif params.algorithm is Algorithm.NEUMF:
        _mlp_back(params, g, pu, qi, x, a, z, mask, grads, users, items)
        grads["b2"][0] = g.sum()
    return loss, {k: v / n for k, v in grads.items()}


def bpr_loss(params: ModelParams, users, pos, neg, reg: float = 1e-4, mask_pos=None, mask_neg=None):
    """Mean of ``-ln sigmoid(s(u,i) - s(u,j)) + reg * ||touched params||^2`` and its gradient."""
    if params.algorithm is Algorithm.POPREC:
        raise ValueError("PopRec has no trainable loss")
    users = np.asarray(users)
    pos = np.asarray(pos)
    neg = np.asarray(neg)
    n = len(users)
    grads = _zeros_like(params)
    pu = params.gamma_u[users]
    qi = params.gamma_i[pos]
    qj = params.gamma_i[neg]
    x = params.beta_i[pos] - params.beta_i[neg]
    if params.algorithm is Algorithm.MF:
        x = x + np.einsum("nd,nd->n", pu, qi - qj)
    elif params.algorithm is Algorithm.NEUMF:
        xi, ai, zi, fi = _mlp(params, pu, qi, mask_pos)
        xj, aj, zj, fj = _mlp(params, pu, qj, mask_neg)
        x = x + fi - fj
    penalty = (params.beta_i[pos] ** 2 + params.beta_i[neg] ** 2 + (pu ** 2).sum(axis=1)
               + (qi ** 2).sum(axis=1) + (qj ** 2).sum(axis=1))
    loss = float(np.mean(_softplus_neg(x) + reg * penalty))
    g = -_sigmoid_neg(x)
    np.add.at(grads["beta_i"], pos, g + 2 * reg * params.beta_i[pos])
    np.add.at(grads["beta_i"], neg, -g + 2 * reg * params.beta_i[neg])
    np.add.at(grads["gamma_u"], users, 2 * reg * pu)
    np.add.at(grads["gamma_i"], pos, 2 * reg * qi)
    np.add.at(grads["gamma_i"], neg, 2 * reg * qj)
    if params.algorithm is Algorithm.MF:
        np.add.at(grads["gamma_u"], users, g[:, None] * (qi - qj))
        np.add.at(grads["gamma_i"], pos, g[:, None] * pu)
        np.add.at(grads["gamma_i"], neg, -g[:, None] * pu)
    elif params.algorithm is Algorithm.NEUMF:
        _mlp_back(params, g, pu, qi, xi, ai, zi, mask_pos, grads, users, pos)
        _mlp_back(params, -g, pu, qj, xj, aj, zj, mask_neg, grads, users, neg)
    return loss, {k: v / n for k, v in grads.items()}
