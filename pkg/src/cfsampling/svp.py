"""Selection-via-proxy sampling for CF data, with optional propensity correction.

A cheap proxy (Bias-only or MF) is trained for a fixed number of epochs on the
train set; every epoch's model is kept. Interactions the proxy keeps getting
wrong are the important ones and are retained first.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .data import Dataset, Scenario
from .recommenders.models import Algorithm, ModelParams
from .recommenders.training import EpochTrainer, TrainConfig
from .samplers import Axis, Family, Proxy, SampleResult, SamplerSpec, _checked_target, _result

_log = logging.getLogger(__name__)

PROXY_EPOCHS = 20
PROXY_LR = 0.006
PROXY_DIM = 16
NEGATIVES_PER_POSITIVE = 50
PROPENSITY_A = 0.55
PROPENSITY_B = 1.5


class PropensityError(ValueError):
    pass


@dataclass
class ProxyTrace:
    proxy: Proxy
    scenario: Scenario
    snapshots: list[ModelParams]
    negatives_per_positive: int
    seed: int

    @property
    def epochs(self) -> int:
        return len(self.snapshots)


@dataclass
class ImportanceTable:
    """Importance per interaction index (``axis=interactions``) or per user id."""

    axis: Axis
    scores: np.ndarray
    propensity_corrected: bool = False
    propensity: np.ndarray | None = field(default=None, repr=False)
    excluded: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "importance", "propensity"])
            for k, v in enumerate(self.scores.tolist()):
                prop = "" if self.propensity is None else repr(float(self.propensity[k]))
                w.writerow([k, repr(v), prop])


def train_proxy(train: Dataset, scenario: Scenario | str, proxy: Proxy | str = Proxy.BIAS,
                seed: int = 0, epochs: int = PROXY_EPOCHS, lr: float = PROXY_LR,
                dim: int = PROXY_DIM, negatives_per_positive: int = NEGATIVES_PER_POSITIVE,
                reg: float = 1e-4) -> ProxyTrace:
    """Train the proxy for exactly ``epochs`` epochs, snapshotting after each."""
    proxy = Proxy(proxy)
    if epochs < 1:
        raise ValueError("a proxy needs at least one epoch")
    algorithm = Algorithm.MF if proxy is Proxy.MF else Algorithm.BIAS
    cfg = TrainConfig(dim=dim, lr=lr, reg=reg, max_epochs=epochs)
    trainer = EpochTrainer(algorithm, train, Scenario(scenario), cfg, seed)
    snaps = []
    for _ in range(epochs):
        trainer.step()
        snaps.append(trainer.params.copy())
    return ProxyTrace(proxy, Scenario(scenario), snaps, negatives_per_positive, seed)


def _sample_item_negatives(train: Dataset, users: np.ndarray, k: int, rng) -> np.ndarray:
    n_items = train.num_items
    rows = np.repeat(users, k)
    neg = rng.integers(0, n_items, size=len(rows))
    bad = np.flatnonzero(train.contains_pairs(rows, neg))
    while len(bad):
        neg[bad] = rng.integers(0, n_items, size=len(bad))
        bad = bad[train.contains_pairs(rows[bad], neg[bad])]
    return neg.reshape(len(users), k)


def interaction_delta(trace: ProxyTrace, train: Dataset) -> np.ndarray:
    """Per-interaction proxy difficulty averaged over epochs.

    Explicit feedback: mean squared error of the epoch models. Implicit and
    sequential feedback: mean of ``1 / max(AUC_e, eps)``, where ``AUC_e`` is the
    fraction of sampled non-interacted items the epoch-``e`` model scores
    strictly below the positive and ``eps = 1 / (2 * negatives)``.
    """
    n = len(train)
    total = np.zeros(n)
    if trace.scenario is Scenario.EXPLICIT:
        for p in trace.snapshots:
            pred = p.alpha[0] + p.beta_u[train.users] + p.beta_i[train.items]
            if p.d:
                pred = pred + np.einsum("nd,nd->n", p.gamma_u[train.users], p.gamma_i[train.items])
            total += (pred - train.ratings) ** 2
        return total / trace.epochs
    k = trace.negatives_per_positive
    eps = 1.0 / (2 * k)
    degree = train.user_degree[train.users]
    ok = degree < train.num_items
    if not ok.all():
        _log.warning("%d interactions belong to users without negatives; importance undefined",
                     int((~ok).sum()))
    idx = np.flatnonzero(ok)
    # negatives come from their own stream so importance is reproducible from the trace
    rng = np.random.default_rng(np.random.SeedSequence([trace.seed, 0x5EED]))
    for p in trace.snapshots:
        negs = _sample_item_negatives(train, train.users[idx], k, rng)
        auc = kernels.pairwise_auc(train.users[idx], train.items[idx], negs, p.beta_i,
                                   p.gamma_u, p.gamma_i)
        total[idx] += 1.0 / np.maximum(auc, eps)
    out = total / trace.epochs
    out[~ok] = np.nan
    return out


@dataclass(frozen=True)
class PropensityParams:
    A: float
    B: float
    C_u: float
    C_i: float
    N_u: np.ndarray
    N_i: np.ndarray

    def user(self, users=None) -> np.ndarray:
        n = self.N_u if users is None else self.N_u[users]
        return _sigmoid_curve(n, self.A, self.B, self.C_u)

    def item(self, items=None) -> np.ndarray:
        n = self.N_i if items is None else self.N_i[items]
        return _sigmoid_curve(n, self.A, self.B, self.C_i)

    def pair(self, users, items) -> np.ndarray:
        return self.user(users) * self.item(items)


def _sigmoid_curve(n, A, B, C):
    return 1.0 / (1.0 + C * np.exp(-A * np.log(np.asarray(n, dtype=np.float64) + B)))


def propensity_constant(count: int, A: float, B: float) -> float:
    return (math.log(count) - 1.0) * (B + 1.0) ** A


def propensity(train: Dataset, A: float = PROPENSITY_A, B: float = PROPENSITY_B) -> PropensityParams:
    """Observation propensities ``p_u * p_i`` on the sigmoid-in-log-count curves."""
    n_users = len(train.active_users)
    n_items = len(train.active_items)
    if n_users <= math.e or n_items <= math.e:
        raise PropensityError("propensity model invalid for tiny dataset")
    return PropensityParams(A, B, propensity_constant(n_users, A, B),
                            propensity_constant(n_items, A, B),
                            train.user_degree.astype(np.float64), train.item_degree.astype(np.float64))


def propensity_weighted(delta: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Inverse-propensity importance ``delta / p`` of observed interactions."""
    return np.asarray(delta, dtype=np.float64) / np.asarray(p, dtype=np.float64)


def importance(trace: ProxyTrace, train: Dataset, axis: Axis | str = Axis.INTERACTIONS,
               propensity_params: PropensityParams | None = None,
               delta: np.ndarray | None = None) -> ImportanceTable:
    """Importance table on the interaction or user axis.

    With ``propensity_params`` each interaction's difficulty is divided by its
    propensity before any per-user averaging.
    """
    axis = Axis(axis)
    delta = interaction_delta(trace, train) if delta is None else delta
    prop = None
    scores = delta
    if propensity_params is not None:
        prop = propensity_params.pair(train.users, train.items)
        scores = propensity_weighted(delta, prop)
    if axis is Axis.INTERACTIONS:
        bad = np.flatnonzero(np.isnan(scores))
        return ImportanceTable(axis, scores, prop is not None, prop, bad)
    valid = ~np.isnan(scores)
    sums = np.bincount(train.users[valid], weights=scores[valid], minlength=train.num_users)
    cnt = np.bincount(train.users[valid], minlength=train.num_users)
    with np.errstate(invalid="ignore"):
        per_user = np.where(cnt > 0, sums / np.maximum(cnt, 1), np.nan)
    bad = np.setdiff1d(train.active_users, np.flatnonzero(cnt))
    return ImportanceTable(axis, per_user, prop is not None, None, bad)


def _descending(values: np.ndarray, candidates: np.ndarray, rng) -> np.ndarray:
    """``candidates`` ordered by descending value; ties (and NaNs, last) in seeded-random order."""
    v = values[candidates]
    tie = rng.permutation(len(candidates))
    nan = np.isnan(v)
    order = np.lexsort((tie, -np.where(nan, -np.inf, v), nan))
    return candidates[order]


def svp_sample(train: Dataset, spec: SamplerSpec, scenario: Scenario | str = Scenario.IMPLICIT,
               proxy_cache: dict | None = None, **proxy_kwargs) -> SampleResult:
    """SVP-CF / SVP-CF-Prop sample of ``train``.

    ``proxy_cache`` (any dict) memoises the proxy difficulty per train set,
    scenario, proxy and seed so sweeps over ``p`` train each proxy once.
    """
    if spec.family not in (Family.SVP_CF, Family.SVP_CF_PROP):
        raise ValueError(f"{spec.family.value} is not an SVP sampler")
    scenario = Scenario(scenario)
    target = _checked_target(train, spec)
    key = (id(train), len(train), scenario, spec.proxy, spec.seed)
    if proxy_cache is not None and key in proxy_cache:
        delta = proxy_cache[key][1]
    else:
        trace = train_proxy(train, scenario, spec.proxy, spec.seed, **proxy_kwargs)
        delta = interaction_delta(trace, train)
        if proxy_cache is not None:
            # hold a reference to train so id() stays unique while cached
            proxy_cache[key] = (train, delta)
    props = propensity(train) if spec.family is Family.SVP_CF_PROP else None
    if props is None:
        table = ImportanceTable(Axis.INTERACTIONS, delta)
        if spec.axis is Axis.USERS:
            table = importance(None, train, Axis.USERS, None, delta)
    else:
        table = importance(None, train, spec.axis, props, delta)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x71E]))
    if spec.axis is Axis.INTERACTIONS:
        order = _descending(table.scores, np.arange(len(train)), rng)
        return _result(train, spec, order[:target], target)
    users = _descending(table.scores, train.active_users, rng)
    deg = train.user_degree[users]
    stop = int(np.searchsorted(np.cumsum(deg), target)) + 1
    keep = np.concatenate([train.user_history(u) for u in users[:stop]])
    return _result(train, spec, keep, target)
