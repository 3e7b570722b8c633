from __future__ import annotations

import json

import numpy as np
import pytest

from cfsampling.benchmark import TauRecord
from cfsampling.data import Scenario
from cfsampling.featurizer import DIM, DatasetEmbedding
from cfsampling.genie import (
    INPUT_DIM,
    GenieError,
    GenieExample,
    GenieModel,
    Mode,
    best_static_sampler,
    build_meta_dataset,
    design_matrix,
    embedding_stats,
    evaluate_genie,
    fit_least_squares,
    full_key,
    init_weights,
    ordered_pairs,
    precision_at_1,
    random_baseline,
    rank_samplers,
    ranking_loss,
    regression_loss,
    sample_key,
    split_meta,
    split_pairs,
    train_genie,
)
from cfsampling.recommenders.metrics import Metric
from cfsampling.synthetic import synthetic_meta_examples
from gradcheck import check_gradient


@pytest.fixture(scope="module")
def meta():
    return synthetic_meta_examples(n_datasets=3, percents=(80, 40, 10), seed=1)


def _ex(sampler, tau, p=10, metric="AUC", rng=None, ds="d"):
    rng = rng or np.random.default_rng(abs(hash((sampler, p))) % 1000)
    full = np.linspace(100, 1, DIM)
    return GenieExample(full, full * rng.random(DIM), Metric(metric), tau, ds, "implicit", sampler, p)


def test_split_pairs_seven_one_two():
    pairs = [(m, p) for m in "ab" for p in range(5)]
    tr, va, te = split_pairs(pairs, seed=0)
    assert (len(tr), len(va), len(te)) == (7, 1, 2)
    assert sorted(tr + va + te) == sorted(pairs)
    assert split_pairs(pairs, seed=0) == (tr, va, te)


def test_split_meta_never_leaks_pairs(meta):
    s = split_meta(meta, seed=2)
    seen = [{e.mp for e in part} for part in (s.train, s.validation, s.test)]
    assert not (seen[0] & seen[1]) and not (seen[0] & seen[2]) and not (seen[1] & seen[2])
    assert len(s.train) + len(s.validation) + len(s.test) == len(meta)


def test_design_matrix_layout(meta):
    X = design_matrix(meta[:5], embedding_stats(meta))
    assert X.shape == (5, INPUT_DIM)
    assert np.all(X[:, -4:].sum(axis=1) == 1)


@pytest.mark.parametrize("seed", range(3))
def test_regression_gradient(meta, seed):
    rng = np.random.default_rng(seed)
    X = design_matrix(meta[:40], embedding_stats(meta))
    y = np.array([e.target_tau for e in meta[:40]])
    w = init_weights(seed=seed)
    assert check_gradient(lambda: regression_loss(w, X, y), w, rng) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_ranking_gradient(meta, seed):
    rng = np.random.default_rng(seed)
    sub = meta[:64]
    X = design_matrix(sub, embedding_stats(meta))
    pairs = ordered_pairs(sub)
    assert len(pairs)
    w = init_weights(seed=seed)
    assert check_gradient(lambda: ranking_loss(w, X, pairs), w, rng) < 1e-4


def test_regression_memorizes_small_set(meta):
    few = meta[:12]
    model = train_genie(few, Mode.REGRESSION, max_steps=1500)
    pred = model.predict(few)
    assert np.mean((pred - [e.target_tau for e in few]) ** 2) < 1e-3
    assert np.all(np.abs(pred) <= 1)


def test_ranking_learns_order(meta):
    few = [e for e in meta if e.mp == ("AUC", 10.0) and e.dataset == "synthetic0"]
    model = train_genie(few, Mode.RANKING, max_steps=800)
    scores = model.predict(few)
    assert precision_at_1(few, scores) == 1.0


def test_ranking_needs_distinct_targets():
    flat = [_ex(s, 0.3) for s in ("a", "b", "c")]
    with pytest.raises(GenieError, match="ordered pair"):
        train_genie(flat, Mode.RANKING, max_steps=5)


def test_ordered_pairs_within_groups_only():
    ex = [_ex("a", 0.9), _ex("b", 0.1), _ex("c", 0.5, p=20)]
    assert ordered_pairs(ex).tolist() == [[0, 1]]


def test_precision_and_random_baseline():
    ex = [_ex("a", 0.9), _ex("b", 0.1), _ex("c", 0.9)]
    assert random_baseline(ex) == pytest.approx(2 / 3)
    assert precision_at_1(ex, np.array([0.0, 1.0, 0.0])) == 0.0
    # ties in score go to the alphabetically first sampler
    assert precision_at_1(ex, np.array([0.5, 0.1, 0.5])) == 1.0


def test_best_static_sampler_by_mean_tau():
    ex = [_ex("a", 0.2), _ex("b", 0.3), _ex("a", 0.6, p=20), _ex("b", 0.4, p=20)]
    assert best_static_sampler(ex) == "a"


def test_json_round_trip(tmp_path, meta):
    model = train_genie(meta[:50], max_steps=20)
    model.save(tmp_path / "m.json")
    back = GenieModel.load(tmp_path / "m.json")
    assert np.array_equal(back.predict(meta[:50]), model.predict(meta[:50]))
    d = json.loads((tmp_path / "m.json").read_text())
    d["metric_order"] = ["AUC"]
    with pytest.raises(GenieError):
        GenieModel.from_dict(d)
    with pytest.raises(GenieError):
        GenieModel.load(tmp_path / "missing.json")


def test_rank_samplers_orders_by_score(meta):
    model = train_genie(meta[:100], max_steps=50)
    full = DatasetEmbedding.from_vector(meta[0].full_embedding)
    cands = {e.sampler: DatasetEmbedding.from_vector(e.sample_embedding)
             for e in meta[:100] if e.p == meta[0].p}
    ranked = rank_samplers(model, full, cands, "AUC")
    assert sorted(n for n, _ in ranked) == sorted(cands)
    scores = [s for _, s in ranked]
    assert scores == sorted(scores, reverse=True)
    with pytest.raises(GenieError):
        rank_samplers(model, full, {}, "AUC")


def test_least_squares_fits_linear_targets():
    rng = np.random.default_rng(0)
    ex = []
    for k in range(150):
        s = rng.random(DIM) * 10
        ex.append(GenieExample(np.full(DIM, 5.0), s, Metric.AUC, 0.0, "d", "implicit", f"s{k}", 10))
    ls0 = fit_least_squares(ex)
    X = design_matrix(ex, ls0.stats)
    y = 0.1 * X[:, DIM + 3] - 0.05 * X[:, DIM + 7]
    ex = [GenieExample(e.full_embedding, e.sample_embedding, e.metric, float(t), e.dataset,
                       e.scenario, e.sampler, e.p) for e, t in zip(ex, y)]
    assert np.allclose(fit_least_squares(ex).predict(ex), y, atol=1e-8)


def test_meta_dataset_joins_on_keys():
    emb = DatasetEmbedding.from_vector(np.arange(DIM, dtype=float))
    embs = {full_key("d", "implicit"): emb, sample_key("d", "implicit", "head_user", 10): emb}
    taus = [TauRecord("d", Scenario.IMPLICIT, Metric.AUC, "head_user", 10.0, 0, 0.4),
            TauRecord("d", Scenario.IMPLICIT, Metric.AUC, "random_user", 10.0, 0, 0.2)]
    out = build_meta_dataset(taus, embs)
    assert len(out) == 1 and out[0].sampler == "head_user" and out[0].target_tau == 0.4


def test_evaluate_reports_baselines(meta):
    s = split_meta(meta, seed=0)
    model = train_genie(s.train, validation=s.validation, max_steps=300)
    rep = evaluate_genie(model, s.test, s.train)
    assert {"p_at_1", "random", "best_static", "best_static_sampler", "mse"} <= set(rep)
    assert 0 <= rep["p_at_1"] <= 1
