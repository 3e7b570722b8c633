"""Full-ranking evaluation (no sampled metrics)."""
from __future__ import annotations

from enum import Enum

import numpy as np

from ..data import Dataset, Scenario, SplitDataset
from .models import ModelParams, score, score_users


class Metric(str, Enum):
    MSE = "MSE"
    AUC = "AUC"
    RECALL = "Recall@100"
    NDCG = "nDCG@10"


ALL_METRICS = (Metric.MSE, Metric.AUC, Metric.RECALL, Metric.NDCG)
RECALL_K = 100
NDCG_K = 10


class EvaluationError(ValueError):
    pass


def pertinent_metrics(scenario: Scenario | str) -> tuple[Metric, ...]:
    if Scenario(scenario) is Scenario.EXPLICIT:
        return (Metric.MSE,)
    return (Metric.AUC, Metric.RECALL, Metric.NDCG)


def headline_metric(scenario: Scenario | str) -> Metric:
    return Metric.MSE if Scenario(scenario) is Scenario.EXPLICIT else Metric.NDCG


def higher_is_better(metric: Metric | str) -> bool:
    return Metric(metric) is not Metric.MSE


def mse(params: ModelParams, ds: Dataset) -> float:
    if len(ds) == 0:
        raise EvaluationError("no ratings to evaluate")
    err = score(params, ds.users, ds.items) - ds.ratings
    return float(np.mean(err ** 2))


def _mask(users_row: np.ndarray, n_rows: int, n_items: int, *parts: Dataset) -> np.ndarray:
    out = np.zeros((n_rows, n_items), dtype=bool)
    for ds in parts:
        r = users_row[ds.users]
        keep = r >= 0
        out[r[keep], ds.items[keep]] = True
    return out


def ranking_metrics(scores: np.ndarray, excluded: np.ndarray, relevant: np.ndarray,
                    positives: np.ndarray | None = None, recall_k: int = RECALL_K,
                    ndcg_k: int = NDCG_K, with_auc: bool = True) -> dict[Metric, np.ndarray]:
    """Per-row AUC, Recall@k and nDCG@k from dense score/mask matrices.

    Candidates are the items not ``excluded``. An item's rank counts the
    candidates scored higher plus the tied candidates with a smaller id.
    AUC compares each relevant item against the non-``positives`` items, with
    ties counting one half. Rows without relevant items yield NaN.
    """
    n_rows, n_items = scores.shape
    if positives is None:
        positives = excluded | relevant
    rows, items = np.nonzero(relevant & ~excluded)
    ids = np.arange(n_items)
    kmax = max(recall_k, ndcg_k)
    ranks = np.full(len(rows), n_items + 1, dtype=np.int64)
    auc = np.full(len(rows), np.nan)
    exact = np.arange(len(rows))
    if not with_auc and kmax < n_items:
        # items scored below the row's kmax-th best candidate cannot make any cut-off
        masked = np.where(excluded, -np.inf, scores)
        thr = -np.partition(-masked, kmax - 1, axis=1)[:, kmax - 1]
        exact = np.flatnonzero(scores[rows, items] >= thr[rows])
    step = max(1, 4_000_000 // max(1, n_items))
    for a in range(0, len(exact), step):
        sel = exact[a:a + step]
        r = rows[sel]
        it = items[sel]
        S = scores[r]
        s = S[np.arange(len(r)), it][:, None]
        cand = ~excluded[r]
        above = ((S > s) & cand).sum(axis=1)
        tied = ((S == s) & cand & (ids[None, :] < it[:, None])).sum(axis=1)
        ranks[sel] = above + tied + 1
        if not with_auc:
            continue
        neg = ~positives[r]
        n_neg = neg.sum(axis=1)
        lower = ((S < s) & neg).sum(axis=1) + 0.5 * ((S == s) & neg).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            auc[sel] = np.where(n_neg > 0, lower / n_neg, np.nan)
    n_rel = np.bincount(rows, minlength=n_rows).astype(np.float64)
    hits = np.bincount(rows, weights=(ranks <= recall_k).astype(float), minlength=n_rows)
    gains = np.where(ranks <= ndcg_k, 1.0 / np.log2(ranks + 1.0), 0.0)
    dcg = np.bincount(rows, weights=gains, minlength=n_rows)
    disc = np.concatenate([[0.0], np.cumsum(1.0 / np.log2(np.arange(2, ndcg_k + 2)))])
    idcg = disc[np.minimum(n_rel, ndcg_k).astype(int)]
    auc_sum = np.bincount(rows, weights=np.nan_to_num(auc, nan=0.0), minlength=n_rows)
    auc_cnt = np.bincount(rows, weights=(~np.isnan(auc)).astype(float), minlength=n_rows)
    with np.errstate(invalid="ignore", divide="ignore"):
        return {
            Metric.RECALL: np.where(n_rel > 0, hits / np.minimum(n_rel, recall_k), np.nan),
            Metric.NDCG: np.where(n_rel > 0, dcg / idcg, np.nan),
            Metric.AUC: np.where(auc_cnt > 0, auc_sum / auc_cnt, np.nan),
        }


def _ranking_eval(params: ModelParams, target: Dataset, exclude: list[Dataset],
                  positives: list[Dataset], metrics) -> dict[Metric, float]:
    users = target.active_users
    if len(users) == 0:
        raise EvaluationError("no user has held-out interactions")
    n_items = params.num_items
    sums = {m: 0.0 for m in metrics}
    count = 0
    chunk = max(1, 2_000_000 // max(1, n_items))
    row_of = np.full(target.num_users, -1, dtype=np.int64)
    for a in range(0, len(users), chunk):
        us = users[a:a + chunk]
        row_of[:] = -1
        row_of[us] = np.arange(len(us))
        S = score_users(params, us)
        excl = _mask(row_of, len(us), n_items, *exclude)
        rel = _mask(row_of, len(us), n_items, target)
        with_auc = Metric.AUC in metrics
        pos = _mask(row_of, len(us), n_items, *positives) if with_auc else None
        res = ranking_metrics(S, excl, rel, pos, with_auc=with_auc)
        ok = ~np.isnan(res[Metric.NDCG])
        count += int(ok.sum())
        for m in metrics:
            sums[m] += float(np.nansum(res[m][ok]))
    if count == 0:
        raise EvaluationError("every user was skipped")
    return {m: sums[m] / count for m in metrics}


def evaluate_all(params: ModelParams, split: SplitDataset, part: str = "test",
                 metrics=None) -> dict[Metric, float]:
    """All pertinent metrics on the test (or validation) part.

    Test ranking excludes each user's train and validation positives;
    validation ranking excludes train positives only.
    """
    metrics = tuple(Metric(m) for m in (metrics or pertinent_metrics(split.scenario)))
    target = split.test if part == "test" else split.validation
    out: dict[Metric, float] = {}
    if Metric.MSE in metrics:
        out[Metric.MSE] = mse(params, target)
    rank_metrics = [m for m in metrics if m is not Metric.MSE]
    if rank_metrics:
        exclude = [split.train, split.validation] if part == "test" else [split.train]
        out.update(_ranking_eval(params, target, exclude,
                                 [split.train, split.validation, split.test], rank_metrics))
    return out


def evaluate(params: ModelParams, algorithm, split: SplitDataset, metric: Metric | str,
             part: str = "test") -> float:
    metric = Metric(metric)
    if metric not in pertinent_metrics(split.scenario):
        raise EvaluationError(f"{metric.value} is not pertinent to {split.scenario.value}")
    return evaluate_all(params, split, part, [metric])[metric]
