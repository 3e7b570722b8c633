from __future__ import annotations

import numpy as np
import pytest

from cfsampling.data import from_arrays, split
from cfsampling.recommenders.metrics import Metric, evaluate
from cfsampling.recommenders.models import score_users
from cfsampling.recommenders.training import (
    EpochTrainer,
    TrainConfig,
    grid_configs,
    popularity,
    sample_negatives,
    train,
    tune,
)

FAST = TrainConfig(dim=4, lr=0.02, max_epochs=8, patience=3)


def _dense_explicit(ratings):
    nu, ni = ratings.shape
    u, i = np.divmod(np.arange(nu * ni), ni)
    return from_arrays(u, i, ratings.ravel())


def test_constant_ratings_are_learned_exactly():
    ds = _dense_explicit(np.full((10, 8), 4.0))
    res = train("BiasOnly", split(ds, "explicit", 0), FAST)
    assert res.params.alpha[0] == pytest.approx(4.0)
    assert np.allclose(res.params.beta_u, 0) and np.allclose(res.params.beta_i, 0)


def test_rank_one_ratings_favour_factors():
    rng = np.random.default_rng(0)
    a, b = rng.normal(0, 1, 30), rng.normal(0, 1, 25)
    ds = _dense_explicit(3 + np.outer(a, b))
    sp = split(ds, "explicit", 0)
    cfg = TrainConfig(dim=4, lr=0.02, max_epochs=40, patience=5)
    mf = evaluate(train("MF", sp, cfg).params, "MF", sp, Metric.MSE)
    bias = evaluate(train("BiasOnly", sp, cfg).params, "BiasOnly", sp, Metric.MSE)
    assert mf < 0.5 * bias


def test_poprec_ranks_every_user_alike(toy_split):
    p = popularity(toy_split.train)
    S = score_users(p, np.arange(toy_split.train.num_users))
    assert np.all(S == S[0])
    assert S[0].tolist() == np.bincount(toy_split.train.items,
                                        minlength=toy_split.train.num_items).tolist()


def test_poprec_not_offered_for_explicit(toy_explicit):
    with pytest.raises(ValueError):
        train("PopRec", toy_explicit)


@pytest.mark.parametrize("algorithm", ["MF", "NeuMFLite"])
def test_training_is_deterministic(toy_split, algorithm):
    a = train(algorithm, toy_split, FAST, seed=3)
    b = train(algorithm, toy_split, FAST, seed=3)
    assert a.val_history == b.val_history
    assert np.array_equal(a.params.gamma_u, b.params.gamma_u)


def test_early_stopping_keeps_best_epoch(toy_split):
    res = train("MF", toy_split, FAST)
    assert 1 <= res.best_epoch <= res.epochs_trained <= FAST.max_epochs
    assert res.best_val == max(res.val_history)
    assert res.epochs_trained == FAST.max_epochs or \
        res.epochs_trained - res.best_epoch == FAST.patience


def test_bpr_loss_goes_down(toy_split):
    tr = EpochTrainer("MF", toy_split.train, toy_split.scenario, FAST, 0)
    losses = [tr.step() for _ in range(6)]
    assert losses[-1] < losses[0]


def test_negatives_are_never_positives(toy, rng):
    neg = sample_negatives(toy, rng)
    assert not toy.contains_pairs(toy.users, neg).any()


def test_negatives_impossible_for_saturated_user(rng):
    ds = from_arrays([0, 0, 1], [0, 1, 0])
    with pytest.raises(ValueError):
        sample_negatives(ds, rng)


def test_grid_covers_only_relevant_axes():
    grid = {"lr": (0.1, 0.2), "dim": (2, 4, 8), "dropout": (0.0, 0.5)}
    assert len(grid_configs("PopRec", grid)) == 1
    assert len(grid_configs("BiasOnly", grid)) == 2
    assert len(grid_configs("MF", grid)) == 6
    assert len(grid_configs("NeuMFLite", grid)) == 12


def test_tune_returns_best_validation(toy_split):
    grid = {"lr": (0.001, 0.02), "dim": (4,)}
    best = tune("MF", toy_split, grid, FAST)
    others = [train("MF", toy_split, c).best_val for c in grid_configs("MF", grid, FAST)]
    assert best.best_val == max(others)
