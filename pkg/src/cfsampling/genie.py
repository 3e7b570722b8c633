"""Meta-learner that predicts how well a sample preserves algorithm rankings.

Input for one (full dataset, sample, metric) triple is the normalised
embedding of each plus a one-hot metric code (53 + 53 + 4 = 110 values). The
model is a two-layer ReLU MLP. In regression mode its output goes through
tanh and is fit to the observed Kendall's tau; in ranking mode the raw output
is trained with a pairwise logistic loss among samplers of the same group.
"""
from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .benchmark import TauRecord
from .featurizer import DIM, DatasetEmbedding, NormStats, fit_stats, normalize
from .recommenders.metrics import ALL_METRICS, Metric

_log = logging.getLogger(__name__)

METRIC_ORDER = tuple(m.value for m in ALL_METRICS)
INPUT_DIM = 2 * DIM + len(METRIC_ORDER)
HIDDEN = 32
LEARNING_RATE = 1e-3
MAX_STEPS = 2000
PATIENCE = 200
REFERENCE_P_AT_1 = {"random": 25.2, "best_static": 30.6, "regression": 51.2}


class GenieError(ValueError):
    pass


class Mode(str, Enum):
    REGRESSION = "regression"
    RANKING = "ranking"


@dataclass(frozen=True)
class GenieExample:
    full_embedding: np.ndarray
    sample_embedding: np.ndarray
    metric: Metric
    target_tau: float
    dataset: str
    scenario: str
    sampler: str
    p: float
    seed: int = 0

    @property
    def metric_onehot(self) -> np.ndarray:
        v = np.zeros(len(METRIC_ORDER))
        v[METRIC_ORDER.index(Metric(self.metric).value)] = 1.0
        return v

    @property
    def group(self) -> tuple:
        """Examples sharing a group compete for the top spot."""
        return (self.dataset, self.scenario, Metric(self.metric).value, float(self.p), self.seed)

    @property
    def mp(self) -> tuple[str, float]:
        return (Metric(self.metric).value, float(self.p))


def full_key(dataset: str, scenario: str, seed: int = 0) -> str:
    return f"{dataset}/{scenario}/FULL/seed{seed}"


def sample_key(dataset: str, scenario: str, sampler: str, p: float, seed: int = 0) -> str:
    return f"{dataset}/{scenario}/{sampler}/{p:g}/seed{seed}"


def build_meta_dataset(taus: Sequence[TauRecord],
                       embeddings: Mapping[str, DatasetEmbedding]) -> list[GenieExample]:
    """One example per tau record whose two embeddings exist (others skipped with a warning)."""
    out, missing = [], 0
    for t in taus:
        f = t.scenario.value
        fk = full_key(t.dataset, f, t.seed)
        sk = sample_key(t.dataset, f, t.sampler, t.p, t.seed)
        if fk not in embeddings or sk not in embeddings:
            missing += 1
            continue
        out.append(GenieExample(embeddings[fk].vector, embeddings[sk].vector, t.metric,
                                t.tau, t.dataset, f, t.sampler, t.p, t.seed))
    if missing:
        _log.warning("skipped %d tau records without embeddings", missing)
    return out


@dataclass
class MetaSplit:
    train: list[GenieExample]
    validation: list[GenieExample]
    test: list[GenieExample]
    pairs: dict[str, list[tuple[str, float]]] = field(default_factory=dict)


def split_pairs(pairs, seed: int, fractions=(0.7, 0.15, 0.15)):
    """Shuffle the (metric, p) pairs and cut them into train/validation/test."""
    pairs = sorted(set(pairs))
    rng = np.random.default_rng(seed)
    order = [pairs[k] for k in rng.permutation(len(pairs))]
    n_train = int(math.floor(fractions[0] * len(pairs) + 0.5))
    n_val = int(math.floor(fractions[1] * len(pairs)))
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def split_meta(examples: Sequence[GenieExample], seed: int = 0,
               fractions=(0.7, 0.15, 0.15)) -> MetaSplit:
    """Partition by (metric, p) pair so no held-out pair is ever trained on."""
    tr, va, te = split_pairs([e.mp for e in examples], seed, fractions)
    where = {**{k: 0 for k in tr}, **{k: 1 for k in va}, **{k: 2 for k in te}}
    parts: list[list[GenieExample]] = [[], [], []]
    for e in examples:
        parts[where[e.mp]].append(e)
    return MetaSplit(*parts, pairs={"train": tr, "validation": va, "test": te})


# -- model ------------------------------------------------------------------

@dataclass
class GenieModel:
    mode: Mode
    weights: dict[str, np.ndarray]
    stats: NormStats
    hidden: int = HIDDEN
    history: dict = field(default_factory=dict, repr=False)

    def features(self, examples: Sequence[GenieExample]) -> np.ndarray:
        return design_matrix(examples, self.stats)

    def predict(self, examples: Sequence[GenieExample]) -> np.ndarray:
        return forward(self.weights, self.features(examples), self.mode)

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "hidden": self.hidden, "metric_order": list(METRIC_ORDER),
                "weights": {k: v.tolist() for k, v in sorted(self.weights.items())},
                "stats": self.stats.to_dict(), "history": self.history}

    @classmethod
    def from_dict(cls, d: Mapping) -> GenieModel:
        if tuple(d.get("metric_order", ())) != METRIC_ORDER:
            raise GenieError("model was saved with a different metric encoding")
        return cls(Mode(d["mode"]), {k: np.asarray(v, dtype=np.float64) for k, v in d["weights"].items()},
                   NormStats.from_dict(d["stats"]), int(d["hidden"]), dict(d.get("history", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> GenieModel:
        p = Path(path)
        if not p.exists():
            raise GenieError(f"no genie model at {p}")
        return cls.from_dict(json.loads(p.read_text()))


def embedding_stats(examples: Sequence[GenieExample]) -> NormStats:
    """Per-dimension stats over every embedding (full and sampled) seen in training."""
    vecs = {tuple(e.full_embedding) for e in examples} | {tuple(e.sample_embedding) for e in examples}
    return fit_stats(np.array(sorted(vecs)))


def design_matrix(examples: Sequence[GenieExample], stats: NormStats) -> np.ndarray:
    if not examples:
        return np.zeros((0, INPUT_DIM))
    full = normalize(np.array([e.full_embedding for e in examples]), stats)
    samp = normalize(np.array([e.sample_embedding for e in examples]), stats)
    hot = np.array([e.metric_onehot for e in examples])
    return np.hstack([full, samp, hot])


def init_weights(hidden: int = HIDDEN, input_dim: int = INPUT_DIM, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    return {
        "W1": rng.normal(0.0, math.sqrt(2.0 / input_dim), (hidden, input_dim)),
        "b1": np.zeros(hidden),
        "W2": rng.normal(0.0, math.sqrt(2.0 / hidden), (hidden, hidden)),
        "b2": np.zeros(hidden),
        "w3": rng.normal(0.0, math.sqrt(1.0 / hidden), hidden),
        "b3": np.zeros(1),
    }


def _hidden(w, X):
    a1 = X @ w["W1"].T + w["b1"]
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ w["W2"].T + w["b2"]
    h2 = np.maximum(a2, 0.0)
    return a1, h1, a2, h2, h2 @ w["w3"] + w["b3"][0]


def forward(w: Mapping[str, np.ndarray], X: np.ndarray, mode: Mode | str) -> np.ndarray:
    out = _hidden(w, X)[-1]
    return np.tanh(out) if Mode(mode) is Mode.REGRESSION else out


def _backward(w, X, cache, g_out):
    a1, h1, a2, h2, _ = cache
    grads = {"w3": h2.T @ g_out, "b3": np.array([g_out.sum()])}
    d2 = np.outer(g_out, w["w3"]) * (a2 > 0)
    grads["W2"] = d2.T @ h1
    grads["b2"] = d2.sum(axis=0)
    d1 = (d2 @ w["W2"]) * (a1 > 0)
    grads["W1"] = d1.T @ X
    grads["b1"] = d1.sum(axis=0)
    return grads


def regression_loss(w, X, y):
    """Mean squared error of ``tanh(f(x))`` against tau, and its gradient."""
    cache = _hidden(w, X)
    t = np.tanh(cache[-1])
    e = t - y
    g = 2.0 * e * (1.0 - t ** 2) / len(y)
    return float(np.mean(e ** 2)), _backward(w, X, cache, g)


def ranking_loss(w, X, pairs):
    """Mean of ``-ln sigmoid(f(x_i) - f(x_j))`` over (winner i, loser j) pairs."""
    if len(pairs) == 0:
        raise GenieError("ranking mode needs at least one ordered pair")
    pairs = np.asarray(pairs, dtype=np.int64)
    cache = _hidden(w, X)
    f = cache[-1]
    d = f[pairs[:, 0]] - f[pairs[:, 1]]
    loss = float(np.mean(np.logaddexp(0.0, -d)))
    gd = -0.5 * (1.0 - np.tanh(0.5 * d)) / len(pairs)
    g = np.bincount(pairs[:, 0], weights=gd, minlength=len(f)) - np.bincount(
        pairs[:, 1], weights=gd, minlength=len(f))
    return loss, _backward(w, X, cache, g)


def ordered_pairs(examples: Sequence[GenieExample]) -> np.ndarray:
    """(i, j) index pairs in the same group with a strictly larger tau at ``i``."""
    groups: dict[tuple, list[int]] = defaultdict(list)
    for k, e in enumerate(examples):
        groups[e.group].append(k)
    out = []
    for key in sorted(groups, key=repr):
        idx = groups[key]
        for i in idx:
            for j in idx:
                if examples[i].target_tau > examples[j].target_tau:
                    out.append((i, j))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def pairwise_accuracy(scores: np.ndarray, pairs: np.ndarray) -> float:
    if len(pairs) == 0:
        return float("nan")
    return float(np.mean(scores[pairs[:, 0]] > scores[pairs[:, 1]]))


class _Adam:
    def __init__(self, params, lr=LEARNING_RATE, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for k in params:
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * grads[k]
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * grads[k] ** 2
            mh = self.m[k] / (1 - self.b1 ** self.t)
            vh = self.v[k] / (1 - self.b2 ** self.t)
            params[k] -= self.lr * mh / (np.sqrt(vh) + self.eps)


def train_genie(train: Sequence[GenieExample], mode: Mode | str = Mode.REGRESSION,
                validation: Sequence[GenieExample] = (), seed: int = 0, hidden: int = HIDDEN,
                lr: float = LEARNING_RATE, max_steps: int = MAX_STEPS,
                patience: int = PATIENCE) -> GenieModel:
    """Full-batch Adam; keeps the weights that scored best on ``validation``."""
    mode = Mode(mode)
    if not train:
        raise GenieError("no training examples")
    stats = embedding_stats(train)
    X = design_matrix(train, stats)
    y = np.array([e.target_tau for e in train])
    pairs = ordered_pairs(train) if mode is Mode.RANKING else None
    if mode is Mode.RANKING and len(pairs) == 0:
        raise GenieError("ranking mode needs at least one ordered pair")
    Xv = design_matrix(validation, stats)
    yv = np.array([e.target_tau for e in validation])
    pv = ordered_pairs(validation) if mode is Mode.RANKING and validation else None
    w = init_weights(hidden, X.shape[1], seed)
    opt = _Adam(w, lr)

    def val_score(weights) -> float:
        if mode is Mode.REGRESSION:
            return -float(np.mean((forward(weights, Xv, mode) - yv) ** 2))
        if pv is None or len(pv) == 0:
            return float("nan")
        return pairwise_accuracy(forward(weights, Xv, mode), pv)

    use_val = len(validation) > 0 and not (mode is Mode.RANKING and (pv is None or len(pv) == 0))
    best = {k: v.copy() for k, v in w.items()}
    best_score, best_step, losses = -np.inf, 0, []
    for step in range(1, max_steps + 1):
        loss, grads = regression_loss(w, X, y) if mode is Mode.REGRESSION else ranking_loss(w, X, pairs)
        losses.append(loss)
        opt.step(w, grads)
        if not use_val:
            best_step = step
            continue
        score = val_score(w)
        if score > best_score:
            best_score, best_step = score, step
            best = {k: v.copy() for k, v in w.items()}
        elif step - best_step >= patience:
            break
    if not use_val:
        best = w
    history = {"steps": len(losses), "best_step": best_step, "final_loss": losses[-1]}
    return GenieModel(mode, best, stats, hidden, history)


# -- least-squares baseline ------------------------------------------------------

@dataclass
class LeastSquaresModel:
    coef: np.ndarray
    stats: NormStats

    def predict(self, examples: Sequence[GenieExample]) -> np.ndarray:
        X = design_matrix(examples, self.stats)
        return np.hstack([X, np.ones((len(X), 1))]) @ self.coef


def fit_least_squares(train: Sequence[GenieExample]) -> LeastSquaresModel:
    """Minimum-norm linear regression of tau on the genie features plus an intercept."""
    if not train:
        raise GenieError("no training examples")
    stats = embedding_stats(train)
    X = design_matrix(train, stats)
    A = np.hstack([X, np.ones((len(X), 1))])
    coef, *_ = np.linalg.lstsq(A, np.array([e.target_tau for e in train]), rcond=None)
    return LeastSquaresModel(coef, stats)


# -- inference and evaluation ----------------------------------------------------

def rank_samplers(model, full: DatasetEmbedding, candidates: Mapping[str, DatasetEmbedding],
                  metric: Metric | str, dataset: str = "", scenario: str = "",
                  p: float = 0.0) -> list[tuple[str, float]]:
    """Candidates sorted by predicted tau, best first; ties broken by name."""
    if not candidates:
        raise GenieError("no candidate samplers")
    names = sorted(candidates)
    ex = [GenieExample(full.vector, candidates[n].vector, Metric(metric), 0.0, dataset, scenario, n, p)
          for n in names]
    scores = model.predict(ex)
    order = sorted(range(len(names)), key=lambda k: (-scores[k], names[k]))
    return [(names[k], float(scores[k])) for k in order]


def _groups(examples):
    groups: dict[tuple, list[int]] = defaultdict(list)
    for k, e in enumerate(examples):
        groups[e.group].append(k)
    return [groups[k] for k in sorted(groups, key=repr)]


def precision_at_1(examples: Sequence[GenieExample], scores: np.ndarray) -> float:
    """Fraction of groups whose top-scored sampler has the (possibly tied) best true tau."""
    groups = _groups(examples)
    if not groups:
        raise GenieError("no test groups")
    hits = 0
    for idx in groups:
        true = np.array([examples[k].target_tau for k in idx])
        pick = min(idx, key=lambda k: (-scores[k], examples[k].sampler))
        hits += bool(examples[pick].target_tau == true.max())
    return hits / len(groups)


def random_baseline(examples: Sequence[GenieExample]) -> float:
    """Expected P@1 of a uniformly random choice within each group."""
    groups = _groups(examples)
    if not groups:
        raise GenieError("no test groups")
    total = 0.0
    for idx in groups:
        true = np.array([examples[k].target_tau for k in idx])
        total += np.count_nonzero(true == true.max()) / len(idx)
    return total / len(groups)


def best_static_sampler(train: Sequence[GenieExample]) -> str:
    """The sampler with the highest mean training tau (ties by name)."""
    by: dict[str, list[float]] = defaultdict(list)
    for e in train:
        by[e.sampler].append(e.target_tau)
    if not by:
        raise GenieError("no training examples")
    return min(by, key=lambda s: (-math.fsum(by[s]) / len(by[s]), s))


def static_baseline(examples: Sequence[GenieExample], sampler: str) -> float:
    scores = np.array([1.0 if e.sampler == sampler else 0.0 for e in examples])
    return precision_at_1(examples, scores)


def evaluate_genie(model, test: Sequence[GenieExample],
                   train: Sequence[GenieExample] = ()) -> dict:
    """P@1 of ``model`` on ``test`` with the random and best-static baselines."""
    if not test:
        raise GenieError("no test examples")
    scores = model.predict(test)
    out = {"p_at_1": precision_at_1(test, scores), "random": random_baseline(test),
           "groups": len(_groups(test))}
    if train:
        static = best_static_sampler(train)
        out["best_static_sampler"] = static
        out["best_static"] = static_baseline(test, static)
    if getattr(model, "mode", Mode.REGRESSION) is Mode.REGRESSION:
        y = np.array([e.target_tau for e in test])
        out["mse"] = float(np.mean((scores - y) ** 2))
    return out
