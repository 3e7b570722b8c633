from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfsampling.data import from_arrays, split
from cfsampling.recommenders.metrics import (
    EvaluationError,
    Metric,
    evaluate,
    evaluate_all,
    ranking_metrics,
)
from cfsampling.recommenders.models import init_params, score, score_users
from cfsampling.recommenders.training import popularity


def brute_force(scores, excluded, relevant, positives, rk, nk):
    """Row-by-row reference: explicit sort with id tie-break."""
    out = {Metric.RECALL: [], Metric.NDCG: [], Metric.AUC: []}
    for s, ex, rel, pos in zip(scores, excluded, relevant, positives):
        rel = rel & ~ex
        if not rel.any():
            for m in out:
                out[m].append(np.nan)
            continue
        cands = [j for j in range(len(s)) if not ex[j]]
        ordered = sorted(cands, key=lambda j: (-s[j], j))
        rank = {j: r + 1 for r, j in enumerate(ordered)}
        hits = [j for j in np.flatnonzero(rel) if rank[j] <= rk]
        out[Metric.RECALL].append(len(hits) / min(rel.sum(), rk))
        dcg = sum(1 / math.log2(rank[j] + 1) for j in np.flatnonzero(rel) if rank[j] <= nk)
        idcg = sum(1 / math.log2(r + 2) for r in range(min(int(rel.sum()), nk)))
        out[Metric.NDCG].append(dcg / idcg)
        negs = np.flatnonzero(~pos)
        if len(negs) == 0:
            out[Metric.AUC].append(np.nan)
            continue
        aucs = [np.mean([1.0 if s[i] > s[j] else 0.5 if s[i] == s[j] else 0.0 for j in negs])
                for i in np.flatnonzero(rel)]
        out[Metric.AUC].append(np.mean(aucs))
    return {m: np.array(v) for m, v in out.items()}


@given(st.integers(0, 2**31), st.integers(1, 5), st.integers(2, 12), st.integers(1, 4))
def test_ranking_metrics_match_brute_force(seed, rows, items, k):
    rng = np.random.default_rng(seed)
    scores = rng.integers(0, 4, (rows, items)).astype(float)  # plenty of ties
    excluded = rng.random((rows, items)) < 0.3
    relevant = rng.random((rows, items)) < 0.3
    positives = excluded | relevant
    got = ranking_metrics(scores, excluded, relevant, positives, recall_k=k, ndcg_k=k)
    want = brute_force(scores, excluded, relevant, positives, k, k)
    for m in want:
        assert np.allclose(got[m], want[m], equal_nan=True), m


@given(st.integers(0, 2**31))
def test_cutoff_shortcut_agrees(seed):
    rng = np.random.default_rng(seed)
    scores = rng.integers(0, 5, (4, 15)).astype(float)
    excluded = rng.random((4, 15)) < 0.2
    relevant = rng.random((4, 15)) < 0.3
    a = ranking_metrics(scores, excluded, relevant, recall_k=3, ndcg_k=2)
    b = ranking_metrics(scores, excluded, relevant, recall_k=3, ndcg_k=2, with_auc=False)
    for m in (Metric.RECALL, Metric.NDCG):
        assert np.allclose(a[m], b[m], equal_nan=True)


def test_single_relevant_item_at_rank_three():
    scores = np.array([[5.0, 4.0, 3.0, 2.0, 1.0]])
    rel = np.zeros((1, 5), dtype=bool)
    rel[0, 2] = True
    res = ranking_metrics(scores, np.zeros_like(rel), rel, recall_k=2, ndcg_k=10)
    assert res[Metric.NDCG][0] == pytest.approx(1 / math.log2(4))
    assert res[Metric.RECALL][0] == 0.0
    assert res[Metric.AUC][0] == pytest.approx(0.5)


def test_excluded_items_do_not_take_ranks():
    scores = np.array([[9.0, 1.0]])
    rel = np.array([[False, True]])
    res = ranking_metrics(scores, np.array([[True, False]]), rel, recall_k=1, ndcg_k=1)
    assert res[Metric.RECALL][0] == 1.0 and res[Metric.NDCG][0] == 1.0


def _ranking_split(rng, n_users=40, n_items=30):
    u, i = [], []
    for user in range(n_users):
        for item in rng.choice(n_items, 8, replace=False):
            u.append(user)
            i.append(item)
    return split(from_arrays(u, i), "implicit", 0)


def test_oracle_scores_reach_perfect_auc(rng):
    sp = _ranking_split(rng)
    # scores that know the test set
    oracle = np.zeros((sp.test.num_users, sp.test.num_items))
    oracle[sp.test.users, sp.test.items] = 1.0
    excl = np.zeros_like(oracle, dtype=bool)
    excl[sp.train.users, sp.train.items] = True
    excl[sp.validation.users, sp.validation.items] = True
    rel = np.zeros_like(excl)
    rel[sp.test.users, sp.test.items] = True
    pos = excl | rel
    res = ranking_metrics(oracle, excl, rel, pos)
    assert np.nanmean(res[Metric.AUC]) == 1.0
    assert np.nanmean(res[Metric.NDCG]) == 1.0


def test_random_scores_have_auc_near_half(rng):
    sp = _ranking_split(rng, 200, 50)
    p = init_params("MF", sp.train.num_users, sp.train.num_items, 8, rng, init_scale=1.0)
    auc = evaluate(p, "MF", sp, Metric.AUC)
    assert abs(auc - 0.5) < 0.05


def test_evaluate_uses_only_pertinent_metrics(toy_split, toy_explicit):
    p = popularity(toy_split.train)
    assert set(evaluate_all(p, toy_split)) == {Metric.AUC, Metric.RECALL, Metric.NDCG}
    q = init_params("BiasOnly", toy_explicit.train.num_users, toy_explicit.train.num_items)
    with pytest.raises(EvaluationError):
        evaluate(q, "BiasOnly", toy_explicit, Metric.NDCG)


def test_score_users_matches_pointwise(toy):
    for algo in ("BiasOnly", "MF", "NeuMFLite"):
        p = init_params(algo, toy.num_users, toy.num_items, 4, np.random.default_rng(1),
                        init_scale=0.5)
        S = score_users(p, np.arange(5))
        uu, ii = np.meshgrid(np.arange(5), np.arange(toy.num_items), indexing="ij")
        assert np.allclose(S, score(p, uu, ii))
