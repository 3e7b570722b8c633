"""53-dimensional handcrafted embedding of a dataset's bipartite graph."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from . import graph
from .data import Dataset
from .graph import ConvergenceError

_log = logging.getLogger(__name__)

QUANTILES = 10
TOP_EIGEN = 100
MAX_HOPS = 10
HOP_SOURCES = 500
EIGEN_TOL = 1e-8
EIGEN_MAXITER = 1000
DIM = 5 * QUANTILES + 3

BLOCKS = ("user_freq", "item_freq", "eigen", "hop_plot", "component_sizes")
FEATURE_NAMES = tuple(f"{b}_{k}" for b in BLOCKS for k in range(QUANTILES)) + (
    "num_users", "num_items", "num_interactions")
# everything except the (signed) spectrum is a count and gets log1p before scaling
COUNT_LIKE = np.array([not n.startswith("eigen") for n in FEATURE_NAMES])


class FeaturizeError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetEmbedding:
    user_freq: np.ndarray
    item_freq: np.ndarray
    eigen: np.ndarray
    hop_plot: np.ndarray
    component_sizes: np.ndarray
    counts: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.user_freq, self.item_freq, self.eigen, self.hop_plot,
                               self.component_sizes, self.counts]).astype(np.float64)

    @classmethod
    def from_vector(cls, v) -> DatasetEmbedding:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (DIM,):
            raise FeaturizeError(f"embedding must have {DIM} values, got {v.shape}")
        q = QUANTILES
        return cls(*(v[k * q:(k + 1) * q] for k in range(5)), v[5 * q:])


def quantile_samples(values, k: int = QUANTILES) -> np.ndarray:
    """``k`` evenly spaced entries (first to last) of ``values`` sorted descending."""
    v = np.sort(np.asarray(values, dtype=np.float64))[::-1]
    if len(v) == 0:
        return np.zeros(k)
    pos = np.floor(np.arange(k) / (k - 1) * (len(v) - 1) + 0.5).astype(np.int64)
    return v[pos]


def top_eigenvalues(adj: sp.spmatrix, k: int = TOP_EIGEN, tol: float = EIGEN_TOL,
                    maxiter_per_pair: int = EIGEN_MAXITER) -> np.ndarray:
    """Top-``k`` eigenvalues by magnitude (sign kept), descending, zero-padded to ``k``.

    Small graphs use a dense solver; otherwise implicitly restarted Lanczos.
    """
    n = adj.shape[0]
    out = np.zeros(k)
    if n == 0:
        return out
    if n <= k + 1:
        vals = np.linalg.eigvalsh(np.asarray(adj.todense(), dtype=np.float64))
    else:
        maxiter = maxiter_per_pair * k
        try:
            vals = eigsh(sp.csr_matrix(adj, dtype=np.float64), k=k, which="LM", tol=tol,
                         maxiter=maxiter, v0=np.ones(n) / np.sqrt(n), return_eigenvectors=False)
        except ArpackNoConvergence as exc:
            raise ConvergenceError(f"eigen-solver did not converge in {maxiter} iterations "
                                   f"({len(exc.eigenvalues)} of {k} eigenvalues)") from None
    out[:min(k, len(vals))] = vals[np.argsort(-np.abs(vals), kind="stable")][:k]
    return np.sort(out)[::-1]


def hop_plot(adj: sp.spmatrix, max_hops: int = MAX_HOPS, sources: int = HOP_SOURCES,
             seed: int = 0) -> np.ndarray:
    """Ordered node pairs within ``h`` hops for ``h = 1..max_hops``.

    Exact when the graph has at most ``sources`` nodes; otherwise BFS from a
    seeded random subset of sources, scaled to all nodes.
    """
    n = adj.shape[0]
    if n == 0:
        return np.zeros(max_hops)
    if n <= sources:
        src = np.arange(n)
    else:
        src = np.sort(np.random.default_rng(seed).choice(n, size=sources, replace=False))
    counts = np.zeros(max_hops + 1)
    step = max(1, 5_000_000 // n)
    for a in range(0, len(src), step):
        dist = csgraph.shortest_path(adj, method="D", unweighted=True, indices=src[a:a + step])
        finite = dist[np.isfinite(dist)].astype(np.int64)
        counts += np.bincount(np.minimum(finite, max_hops + 1), minlength=max_hops + 2)[:max_hops + 1]
    # distance 0 is the source itself
    return np.cumsum(counts[1:]) * (n / len(src))


def component_sizes(adj: sp.spmatrix) -> np.ndarray:
    if adj.shape[0] == 0:
        return np.zeros(0)
    _, labels = csgraph.connected_components(adj, directed=False)
    return np.bincount(labels).astype(np.float64)


def featurize(ds: Dataset, seed: int = 0) -> DatasetEmbedding:
    """Degree, spectrum, hop-plot and component-size summaries plus raw counts."""
    if len(ds) == 0:
        raise FeaturizeError("cannot featurize an empty dataset")
    adj = graph.adjacency(ds, active_only=True)
    udeg = ds.user_degree[ds.user_degree > 0]
    ideg = ds.item_degree[ds.item_degree > 0]
    emb = DatasetEmbedding(
        quantile_samples(udeg),
        quantile_samples(ideg),
        quantile_samples(top_eigenvalues(adj)),
        hop_plot(adj, seed=seed),
        quantile_samples(component_sizes(adj)),
        np.array([len(udeg), len(ideg), len(ds)], dtype=np.float64),
    )
    if not np.all(np.isfinite(emb.vector)):
        raise FeaturizeError("non-finite feature")
    return emb


# -- normalisation ---------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d) -> NormStats:
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def _squash(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    x[..., mask] = np.log1p(x[..., mask])
    return x


def fit_stats(vectors, count_like: np.ndarray | None = None) -> NormStats:
    v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    mask = COUNT_LIKE if count_like is None else count_like
    s = _squash(v, mask)
    return NormStats(s.mean(axis=0), s.std(axis=0))


def normalize(x, stats: NormStats, count_like: np.ndarray | None = None) -> np.ndarray:
    """log1p on count-like dims, then standardise; zero-std dims are only centred."""
    mask = COUNT_LIKE if count_like is None else count_like
    s = _squash(x, mask) - stats.mean
    flat = stats.std == 0
    if flat.any():
        _log.warning("%d embedding dimension(s) have zero spread; passed through centred",
                     int(flat.sum()))
    return np.where(flat, s, s / np.where(flat, 1.0, stats.std))


def denormalize(z, stats: NormStats, count_like: np.ndarray | None = None) -> np.ndarray:
    mask = COUNT_LIKE if count_like is None else count_like
    flat = stats.std == 0
    s = np.where(flat, z, np.asarray(z) * np.where(flat, 1.0, stats.std)) + stats.mean
    s = np.array(s, dtype=np.float64)
    s[..., mask] = np.expm1(s[..., mask])
    return s


# -- persistence -----------------------------------------------------------

def write_embeddings(path, rows: dict[str, DatasetEmbedding]) -> None:
    """One CSV row per key, 53 value columns."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", *FEATURE_NAMES])
        for key in sorted(rows):
            w.writerow([key, *(repr(float(x)) for x in rows[key].vector)])


def read_embeddings(path) -> dict[str, DatasetEmbedding]:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header[1:]) != FEATURE_NAMES:
            raise FeaturizeError(f"{path}: unexpected embedding header")
        return {row[0]: DatasetEmbedding.from_vector([float(x) for x in row[1:]]) for row in r}
