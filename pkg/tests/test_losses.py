from __future__ import annotations

import numpy as np
import pytest

from cfsampling.recommenders.losses import bpr_loss, mse_loss
from cfsampling.recommenders.models import init_params
from gradcheck import check_gradient


def _setup(algorithm, seed):
    rng = np.random.default_rng(seed)
    p = init_params(algorithm, 6, 8, 3, rng, alpha=3.0, init_scale=0.5)
    p.beta_u[:] = rng.normal(0, 0.3, 6)
    p.beta_i[:] = rng.normal(0, 0.3, 8)
    if p.has_mlp:
        p.b1[:] = rng.normal(0, 0.3, len(p.b1))
    users = rng.integers(0, 6, 25)
    items = rng.integers(0, 8, 25)
    neg = (items + rng.integers(1, 8, 25)) % 8
    ratings = rng.integers(1, 6, 25).astype(float)
    return rng, p, users, items, neg, ratings


@pytest.mark.parametrize("algorithm", ["BiasOnly", "MF", "NeuMFLite"])
@pytest.mark.parametrize("seed", range(3))
def test_mse_gradient(algorithm, seed):
    rng, p, users, items, _, ratings = _setup(algorithm, seed)
    err = check_gradient(lambda: mse_loss(p, users, items, ratings, reg=0.05), p.arrays(), rng)
    assert err < 1e-4


@pytest.mark.parametrize("algorithm", ["BiasOnly", "MF", "NeuMFLite"])
@pytest.mark.parametrize("seed", range(3))
def test_bpr_gradient(algorithm, seed):
    rng, p, users, items, neg, _ = _setup(algorithm, seed)
    err = check_gradient(lambda: bpr_loss(p, users, items, neg, reg=0.05), p.arrays(), rng)
    assert err < 1e-4


def test_mse_gradient_with_dropout_mask():
    rng, p, users, items, _, ratings = _setup("NeuMFLite", 9)
    mask = (rng.random((25, p.W1.shape[0])) < 0.5) * 2.0
    err = check_gradient(lambda: mse_loss(p, users, items, ratings, 0.05, mask), p.arrays(), rng)
    assert err < 1e-4


def test_perfect_fit_costs_only_the_penalty():
    p = init_params("BiasOnly", 2, 2, alpha=3.0)
    loss, grads = mse_loss(p, [0, 1], [0, 1], [3.0, 3.0], reg=1.0)
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads.values())


def test_bpr_at_zero_margin_is_log_two():
    p = init_params("BiasOnly", 1, 2)
    loss, _ = bpr_loss(p, [0], [0], [1], reg=0.0)
    assert loss == pytest.approx(np.log(2))


def test_poprec_has_no_loss():
    p = init_params("PopRec", 2, 2)
    with pytest.raises(ValueError):
        mse_loss(p, [0], [0], [1.0])
