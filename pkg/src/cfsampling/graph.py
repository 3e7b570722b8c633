"""User-item bipartite graph view of a dataset."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .data import Dataset


class ConvergenceError(RuntimeError):
    pass


def edge_endpoints(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Node ids of each interaction: users are ``0..|U|-1``, items follow."""
    return ds.users, ds.items + ds.num_users


def adjacency(ds: Dataset, active_only: bool = False) -> sp.csr_matrix:
    """Symmetric adjacency of the bipartite graph (one edge per interaction).

    Repeated interactions between the same pair collapse to a single edge of
    weight 1. With ``active_only`` zero-degree nodes are removed.
    """
    n = ds.num_users + ds.num_items
    a, b = edge_endpoints(ds)
    rows = np.concatenate([a, b])
    cols = np.concatenate([b, a])
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    adj.data[:] = 1.0
    if active_only:
        keep = np.flatnonzero(np.diff(adj.indptr))
        adj = adj[keep][:, keep].tocsr()
    return adj


def incidence_lists(ds: Dataset):
    """CSR-style node -> incident interaction indices, plus the neighbour of each entry."""
    n = ds.num_users + ds.num_items
    a, b = edge_endpoints(ds)
    m = len(a)
    nodes = np.concatenate([a, b])
    other = np.concatenate([b, a])
    edge = np.concatenate([np.arange(m), np.arange(m)])
    order = np.argsort(nodes, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(nodes, minlength=n), out=indptr[1:])
    return indptr, edge[order], other[order]


def pagerank(adj: sp.spmatrix, damping: float = 0.85, tol: float = 1e-8,
             max_iter: int = 200) -> np.ndarray:
    """Power-iteration pagerank on an undirected graph.

    Dangling (isolated) nodes spread their mass uniformly. Convergence is
    measured in L1 norm.
    """
    adj = sp.csr_matrix(adj, dtype=np.float64)
    n = adj.shape[0]
    if n == 0:
        return np.zeros(0)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    dangling = deg == 0
    inv = np.zeros(n)
    inv[~dangling] = 1.0 / deg[~dangling]
    # column-stochastic transition applied as P^T x
    trans = sp.csr_matrix(adj.T.multiply(inv[None, :]))
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        prev = x
        x = damping * (trans @ prev + prev[dangling].sum() / n) + (1.0 - damping) / n
        x /= x.sum()
        if np.abs(x - prev).sum() < tol:
            return x
    raise ConvergenceError(f"pagerank did not converge in {max_iter} iterations")
