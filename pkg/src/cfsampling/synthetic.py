"""Seeded synthetic interaction data and meta-examples for tests and demos."""
from __future__ import annotations

import numpy as np

from .data import Dataset, from_arrays, preprocess
from .genie import GenieExample
from .featurizer import COUNT_LIKE, DIM
from .recommenders.metrics import ALL_METRICS
from .samplers import PERCENTS, SAMPLER_NAMES


def random_dataset(rng: np.random.Generator, n_users: int = 60, n_items: int = 40,
                   mean_degree: float = 8.0, skew: float = 1.0, name: str = "synthetic") -> Dataset:
    """Long-tailed random interactions, every user with at least three of them.

    Item popularity follows a Zipf-like law with exponent ``skew``; user
    activity is geometric around ``mean_degree``. Ratings are 1..5 and
    timestamps are distinct per user.
    """
    n_items = max(n_items, 4)
    pop = 1.0 / np.arange(1, n_items + 1) ** skew
    pop = pop[rng.permutation(n_items)]
    pop /= pop.sum()
    users, items = [], []
    for u in range(n_users):
        k = int(min(n_items - 1, 3 + rng.geometric(1.0 / max(mean_degree - 2, 1.0)) - 1))
        chosen = rng.choice(n_items, size=k, replace=False, p=pop)
        users += [u] * k
        items += chosen.tolist()
    users = np.array(users, dtype=np.int64)
    items = np.array(items, dtype=np.int64)
    ratings = rng.integers(1, 6, size=len(users)).astype(np.float64)
    timestamps = rng.permutation(len(users)).astype(np.int64) + 1_000
    return preprocess(from_arrays(users, items, ratings, timestamps, name=name))


def _fake_embedding(rng, scale: float) -> np.ndarray:
    v = np.empty(DIM)
    counts = np.sort(np.exp(rng.normal(np.log(scale), 1.0, size=DIM)))[::-1]
    v[COUNT_LIKE] = counts[:COUNT_LIKE.sum()]
    v[~COUNT_LIKE] = np.sort(rng.normal(0.0, scale ** 0.5, size=(~COUNT_LIKE).sum()))[::-1]
    return v


def synthetic_meta_examples(n_datasets: int = 6, samplers=SAMPLER_NAMES, percents=PERCENTS,
                            metrics=ALL_METRICS, noise: float = 0.05, seed: int = 0,
                            informative: int = 6) -> list[GenieExample]:
    """Meta-examples whose tau is a fixed noisy function of the embeddings.

    Each sample embedding is its dataset's embedding shrunk by the retained
    fraction and jittered per sampler; tau is ``tanh`` of a fixed linear
    function of a few log-ratio features plus a per-metric offset, plus
    Gaussian noise, clipped to [-1, 1].
    """
    rng = np.random.default_rng(seed)
    coef_rng = np.random.default_rng(12345)
    dims = coef_rng.choice(DIM, size=informative, replace=False)
    coef = coef_rng.normal(0.0, 1.5, size=informative)
    offset = {m: coef_rng.normal(0.0, 0.2) for m in metrics}
    jitter_scale = {s: 0.2 + 0.6 * coef_rng.random() for s in samplers}
    out = []
    for d in range(n_datasets):
        full = _fake_embedding(rng, 10.0 ** rng.uniform(1.5, 3.5))
        for s in samplers:
            for p in percents:
                frac = p / 100.0
                jit = rng.normal(0.0, jitter_scale[s], size=DIM)
                samp = full.copy()
                samp[COUNT_LIKE] = full[COUNT_LIKE] * frac * np.exp(jit[COUNT_LIKE])
                samp[~COUNT_LIKE] = full[~COUNT_LIKE] * frac ** 0.5 + jit[~COUNT_LIKE]
                signal = samp - full
                signal[COUNT_LIKE] = np.log1p(samp[COUNT_LIKE]) - np.log1p(full[COUNT_LIKE])
                for m in metrics:
                    tau = np.tanh(signal[dims] @ coef / informative + offset[m])
                    tau = float(np.clip(tau + rng.normal(0.0, noise), -1.0, 1.0))
                    out.append(GenieExample(full, samp, m, tau, f"synthetic{d}", "implicit", s, p))
    return out
