from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import kendalltau as scipy_tau

from cfsampling.benchmark import (
    FULL,
    BenchmarkError,
    RankingRecord,
    TauRecord,
    compute_psi,
    expected_cells,
    heatmap_csv,
    kendall_tau,
    p_mle_grid,
    p_mle_heatmap,
    plot_heatmap,
    psi_csv,
    psi_table,
    rankings,
    tau_records,
)
from cfsampling.data import Scenario
from cfsampling.recommenders.metrics import Metric


def brute_tau(a, b):
    """Concordant minus discordant pairs over all pairs (no ties)."""
    n = len(a)
    pa = {e: k for k, e in enumerate(a)}
    pb = {e: k for k, e in enumerate(b)}
    s = sum(np.sign(pa[x] - pa[y]) * np.sign(pb[x] - pb[y])
            for x, y in itertools.combinations(a, 2))
    return s / (n * (n - 1) / 2)


def test_tau_textbook_values():
    assert kendall_tau("abcd", "abcd") == 1.0
    assert kendall_tau("abcd", "dcba") == -1.0
    assert kendall_tau("abcd", "bacd") == pytest.approx(4 / 6)


@pytest.mark.parametrize("n", [4, 5])
def test_tau_exhaustive_small_permutations(n):
    perms = list(itertools.permutations(range(n)))
    for a in perms:
        for b in perms:
            assert kendall_tau(a, b) == brute_tau(a, b)


@given(st.lists(st.integers(0, 3), min_size=2, max_size=8), st.data())
def test_tau_with_ties_matches_scipy(xs, data):
    ys = data.draw(st.lists(st.integers(0, 3), min_size=len(xs), max_size=len(xs)))
    a = dict(enumerate(xs))
    b = dict(enumerate(ys))
    ref = scipy_tau(xs, ys).statistic
    got = kendall_tau(a, b)
    if math.isnan(ref):
        assert got in (0.0, 1.0)
    else:
        assert got == pytest.approx(ref, abs=1e-12)


def test_tau_all_ties_convention():
    assert kendall_tau({"a": 1, "b": 1}, {"a": 1, "b": 1}) == 1.0
    assert kendall_tau({"a": 1, "b": 1}, {"a": 1, "b": 2}) == 0.0


def test_tau_rejects_mismatched_sets():
    with pytest.raises(BenchmarkError):
        kendall_tau("ab", "ac")
    with pytest.raises(BenchmarkError):
        kendall_tau("a", "a")
    with pytest.raises(BenchmarkError):
        kendall_tau("aab", "abb")


def _eval(sampler, p, algo, value, scenario="implicit", metric="nDCG@10", seed=0, ds="d"):
    return {"dataset": ds, "scenario": scenario, "sampler": sampler, "p": p, "seed": seed,
            "algorithm": algo, "status": "ok", "metrics": {m: value for m in
                                                           ("AUC", "Recall@100", metric)}}


ALGOS = ("PopRec", "BiasOnly", "MF", "NeuMFLite")


def _evals(full, sampled, sampler="random_user", p=10, **kw):
    out = [_eval(FULL, 100, a, v, **kw) for a, v in zip(ALGOS, full)]
    out += [_eval(sampler, p, a, v, **kw) for a, v in zip(ALGOS, sampled)]
    return out


def test_rankings_sort_best_first():
    ranks = rankings(_evals([0.1, 0.2, 0.4, 0.3], [0.1, 0.2, 0.4, 0.3]))
    r = next(r for r in ranks if r.sampler == FULL and r.metric is Metric.NDCG)
    assert r.order == ("MF", "NeuMFLite", "BiasOnly", "PopRec")


def test_explicit_ranks_lower_mse_first():
    r = RankingRecord.build("d", "explicit", "MSE", FULL, 100, 0, {"MF": 0.8, "BiasOnly": 0.9})
    assert r.order == ("MF", "BiasOnly")


def test_incomplete_group_dropped():
    ev = _evals([0.1, 0.2, 0.4, 0.3], [0.1, 0.2, 0.4, 0.3])[:-1]
    assert all(r.sampler == FULL for r in rankings(ev))


def test_failed_or_nan_records_ignored():
    ev = _evals([0.1, 0.2, 0.4, 0.3], [0.1, 0.2, 0.4, float("nan")])
    assert not [r for r in rankings(ev) if r.sampler != FULL]
    ev = _evals([0.1, 0.2, 0.4, 0.3], [0.1, 0.2, 0.4, 0.3])
    ev[-1]["status"] = "failed"
    assert not [r for r in rankings(ev) if r.sampler != FULL]


def test_competition_ranks_share_ties():
    r = RankingRecord.build("d", "implicit", "AUC", FULL, 100, 0, {"a": 0.5, "b": 0.5, "c": 0.1})
    assert r.ranks() == {"a": 1, "b": 1, "c": 3}


def test_psi_of_opposite_taus_is_zero():
    taus = [TauRecord("d", Scenario.IMPLICIT, Metric.AUC, "s", 10, 0, 1.0),
            TauRecord("d", Scenario.IMPLICIT, Metric.AUC, "s", 20, 0, -1.0)]
    summ = compute_psi(taus, "d", "s", expected=4)
    assert summ.psi == 0.0 and summ.lam == 0.5 and summ.coverage == "2/4"


def test_psi_requires_records():
    with pytest.raises(BenchmarkError):
        compute_psi([], "d", "s")


def test_expected_cells_counts_pertinent_metrics():
    assert expected_cells(["explicit", "implicit", "sequential"], [80, 10]) == (1 + 3 + 3) * 2


@given(st.lists(st.floats(0.01, 0.99), min_size=8, max_size=8, unique=True))
def test_monotone_rescaling_changes_nothing(vals):
    ev = _evals(vals[:4], vals[4:])
    warped = _evals([v ** 3 + 1 for v in vals[:4]], [v ** 3 + 1 for v in vals[4:]])
    a = [t.tau for t in tau_records(rankings(ev))]
    b = [t.tau for t in tau_records(rankings(warped))]
    assert a == b


def test_identical_rankings_give_psi_one():
    ev = _evals([0.1, 0.2, 0.4, 0.3], [0.2, 0.3, 0.9, 0.5])
    table = psi_table(tau_records(rankings(ev)))
    assert table[("d", "random_user")].psi == 1.0


def test_p_mle_hand_example():
    # MF and NeuMFLite swap places after sampling
    ranks = rankings(_evals([0.1, 0.2, 0.4, 0.3], [0.1, 0.2, 0.3, 0.4]))
    heat = p_mle_heatmap(ranks, "implicit", 10)
    assert heat["NeuMFLite"] == pytest.approx(0.5 + 1 / 6)
    assert heat["MF"] == pytest.approx(0.5 - 1 / 6)
    assert heat["PopRec"] == heat["BiasOnly"] == 0.5


def test_p_mle_without_cells_raises():
    ranks = rankings(_evals([0.1, 0.2, 0.4, 0.3], [0.1, 0.2, 0.3, 0.4]))
    with pytest.raises(BenchmarkError):
        p_mle_heatmap(ranks, "implicit", 80)


def test_outputs_render(tmp_path):
    ev = _evals([0.1, 0.2, 0.4, 0.3], [0.1, 0.2, 0.3, 0.4])
    ev += _evals([0.1, 0.2, 0.4, 0.3], [0.4, 0.3, 0.1, 0.2], sampler="head_user")
    ranks = rankings(ev)
    text = psi_csv(psi_table(tau_records(ranks)))
    lines = text.splitlines()
    assert lines[0] == "group,sampler,d,average"
    assert lines[1].startswith("user,random_user,") and lines[2].startswith("user,head_user,")
    assert lines[2].endswith("-1.000000,-1.000000")
    rows = p_mle_grid(ranks)
    assert heatmap_csv(rows).count("\n") == 1 + 4
    plot_heatmap(rows, tmp_path / "h.png")
    a = (tmp_path / "h.png").read_bytes()
    plot_heatmap(rows, tmp_path / "h.png")
    assert (tmp_path / "h.png").read_bytes() == a
