from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from cfsampling.data import from_arrays
from cfsampling.featurizer import (
    COUNT_LIKE,
    DIM,
    FEATURE_NAMES,
    DatasetEmbedding,
    FeaturizeError,
    component_sizes,
    denormalize,
    featurize,
    fit_stats,
    hop_plot,
    normalize,
    quantile_samples,
    read_embeddings,
    top_eigenvalues,
    write_embeddings,
)
from cfsampling.graph import adjacency
from cfsampling.synthetic import random_dataset


def complete_bipartite(n):
    return from_arrays(np.repeat(np.arange(n), n), np.tile(np.arange(n), n))


def random_graph(rng, n=30, p=0.2):
    A = np.triu(rng.random((n, n)) < p, 1).astype(float)
    return A + A.T


def test_layout():
    assert DIM == 53 == len(FEATURE_NAMES) == len(COUNT_LIKE)
    assert COUNT_LIKE.sum() == 43


def test_quantiles_pick_sorted_positions():
    v = np.arange(1.0, 20.0)
    q = quantile_samples(v)
    assert q[0] == 19 and q[-1] == 1
    assert np.all(np.diff(q) <= 0)
    assert quantile_samples([3.0]).tolist() == [3.0] * 10
    assert quantile_samples([]).tolist() == [0.0] * 10


@pytest.mark.parametrize("seed", range(10))
def test_top_eigenvalues_match_dense(seed):
    A = random_graph(np.random.default_rng(seed))
    got = top_eigenvalues(sp.csr_matrix(A), k=10)
    vals = np.linalg.eigvalsh(A)
    want = np.sort(vals[np.argsort(-np.abs(vals), kind="stable")][:10])[::-1]
    assert np.abs(got - want).max() < 1e-6


@pytest.mark.parametrize("n", [1, 2, 5, 13, 20])
def test_complete_bipartite_spectrum(n):
    top = top_eigenvalues(adjacency(complete_bipartite(n)), k=10)
    assert top[0] == pytest.approx(n, abs=1e-8)
    # K_{n,n} has eigenvalues n, -n and zeros
    assert sorted(top[np.abs(top) > 1e-8].tolist()) == pytest.approx([-n, n])


def test_padding_when_graph_is_small():
    top = top_eigenvalues(adjacency(complete_bipartite(2)), k=100)
    assert len(top) == 100 and np.count_nonzero(np.abs(top) > 1e-9) == 2


def test_hop_plot_on_a_path():
    # path 0-1-2-3: ordered pairs at distance 1: 6, 2: 4, 3: 2
    A = sp.diags([np.ones(3), np.ones(3)], [1, -1], shape=(4, 4))
    assert hop_plot(sp.csr_matrix(A), max_hops=4).tolist() == [6, 10, 12, 12]


def test_hop_plot_sampled_sources_estimate(rng):
    A = sp.csr_matrix(random_graph(rng, 200, 0.03))
    exact = hop_plot(A)
    est = hop_plot(A, sources=150, seed=1)
    assert np.allclose(est[-1], exact[-1], rtol=0.2)


def test_component_sizes():
    ds = from_arrays([0, 0, 0, 1, 1, 1, 2, 2, 2], [0, 1, 2, 0, 1, 2, 5, 6, 7])
    assert sorted(component_sizes(adjacency(ds)).tolist()) == [4, 5]
    assert component_sizes(adjacency(complete_bipartite(4))).tolist() == [8]


def test_featurize_counts_and_single_component():
    emb = featurize(complete_bipartite(5))
    assert emb.counts.tolist() == [5, 5, 25]
    assert np.all(emb.component_sizes == 10)
    assert np.all(emb.user_freq == 5)
    assert emb.hop_plot[1] == 90  # every ordered pair within two hops


def test_featurize_is_invariant_to_id_permutation(toy, rng):
    perm_u = rng.permutation(toy.num_users)
    perm_i = rng.permutation(toy.num_items)
    shuffled = from_arrays(perm_u[toy.users], perm_i[toy.items], toy.ratings, toy.timestamps)
    assert np.allclose(featurize(toy).vector, featurize(shuffled).vector)


def test_featurize_ignores_inactive_nodes(toy):
    half = toy.subset(np.flatnonzero(toy.users < toy.num_users // 2))
    direct = from_arrays(half.users, half.items)
    assert np.allclose(featurize(half).vector, featurize(direct).vector)


def test_empty_dataset_rejected(toy):
    with pytest.raises(FeaturizeError):
        featurize(toy.subset([]))


def test_vector_round_trip(toy):
    emb = featurize(toy)
    back = DatasetEmbedding.from_vector(emb.vector)
    assert np.array_equal(back.vector, emb.vector)
    with pytest.raises(FeaturizeError):
        DatasetEmbedding.from_vector(np.zeros(5))


def test_csv_round_trip(tmp_path, toy):
    rows = {"b": featurize(toy), "a": featurize(toy.subset(np.arange(100)))}
    write_embeddings(tmp_path / "e.csv", rows)
    back = read_embeddings(tmp_path / "e.csv")
    assert list(back) == ["a", "b"]
    assert all(np.array_equal(back[k].vector, rows[k].vector) for k in rows)


def test_single_sample_normalizes_to_zero(toy, caplog):
    v = featurize(toy).vector
    assert np.array_equal(normalize(v, fit_stats([v])), np.zeros(DIM))
    assert "zero spread" in caplog.text


@given(st.integers(0, 1000))
def test_normalize_round_trip(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((6, DIM)) * 50
    X[:, 0] = 3.0  # a flat dimension
    stats = fit_stats(X)
    Z = normalize(X, stats)
    assert np.allclose(Z[:, 1:].mean(axis=0), 0, atol=1e-9)
    assert np.allclose(denormalize(Z, stats), X)


def test_featurize_random_datasets_finite():
    for seed in range(5):
        emb = featurize(random_dataset(np.random.default_rng(seed)))
        assert emb.vector.shape == (DIM,) and np.isfinite(emb.vector).all()
