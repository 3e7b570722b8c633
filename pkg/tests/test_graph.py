from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from cfsampling.data import from_arrays
from cfsampling.graph import ConvergenceError, adjacency, incidence_lists, pagerank


def dense_pagerank(A: np.ndarray, damping: float = 0.85) -> np.ndarray:
    """Solve the stationary equation directly."""
    n = len(A)
    deg = A.sum(axis=1)
    M = np.zeros((n, n))
    for j in range(n):
        M[:, j] = A[j] / deg[j] if deg[j] > 0 else 1.0 / n
    return np.linalg.solve(np.eye(n) - damping * M, np.full(n, (1 - damping) / n))


def random_graph(rng, n=10, p=0.3):
    A = np.triu(rng.random((n, n)) < p, 1).astype(float)
    return A + A.T


@pytest.mark.parametrize("seed", range(20))
def test_pagerank_matches_dense_solve(seed):
    A = random_graph(np.random.default_rng(seed))
    x = pagerank(sp.csr_matrix(A))
    assert np.abs(x - dense_pagerank(A)).max() < 1e-8
    assert abs(x.sum() - 1) < 1e-6


def test_pagerank_with_isolated_nodes():
    A = np.zeros((10, 10))
    A[0, 1] = A[1, 0] = A[1, 2] = A[2, 1] = 1
    x = pagerank(sp.csr_matrix(A))
    assert np.abs(x - dense_pagerank(A)).max() < 1e-8
    assert np.allclose(x[3:], x[3])


def test_regular_graph_is_uniform():
    n = 8
    A = np.roll(np.eye(n), 1, axis=1) + np.roll(np.eye(n), -1, axis=1)
    assert np.allclose(pagerank(sp.csr_matrix(A)), 1 / n)


def test_pagerank_budget_exhausted():
    A = random_graph(np.random.default_rng(0), 30, 0.2)
    with pytest.raises(ConvergenceError):
        pagerank(sp.csr_matrix(A), tol=0.0, max_iter=3)


def test_adjacency_collapses_repeats():
    ds = from_arrays([0, 0, 1, 1], [0, 0, 1, 0])
    adj = adjacency(ds)
    assert adj.shape == (4, 4)
    assert (adj != adj.T).nnz == 0
    assert adj[0, 2] == 1.0 and adj.sum() == 6


def test_active_only_drops_isolated_nodes():
    full = from_arrays([0, 1, 2, 2], [0, 1, 1, 2])
    ds = full.subset([0, 3])  # user 1 and item 1 lose their edges
    assert adjacency(ds).shape == (6, 6)
    assert adjacency(ds, active_only=True).shape == (4, 4)


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 4)), min_size=1, max_size=30))
def test_incidence_lists_cover_each_interaction_twice(pairs):
    ds = from_arrays(*map(list, zip(*pairs)))
    nu = ds.num_users
    indptr, edges, other = incidence_lists(ds)
    assert indptr[-1] == 2 * len(ds)
    assert np.bincount(edges, minlength=len(ds)).tolist() == [2] * len(ds)
    for node in range(nu + ds.num_items):
        es = edges[indptr[node]:indptr[node + 1]]
        nb = other[indptr[node]:indptr[node + 1]]
        if node < nu:
            assert np.all(ds.users[es] == node) and np.all(nb == ds.items[es] + nu)
        else:
            assert np.all(ds.items[es] == node - nu) and np.all(nb == ds.users[es])
