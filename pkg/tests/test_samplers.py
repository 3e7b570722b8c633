from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfsampling.data import from_arrays, split
from cfsampling.graph import adjacency
from cfsampling.samplers import (
    SAMPLER_NAMES,
    Family,
    SamplerSpec,
    SamplingError,
    all_samplers,
    parse_sampler,
    sample,
    target_count,
)
from cfsampling.synthetic import random_dataset

QUICK_PROXY = {"epochs": 2}
NON_SVP = [n for n in SAMPLER_NAMES if not n.startswith("svp")]


def _train(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, int(rng.integers(15, 50)), int(rng.integers(10, 35)),
                        mean_degree=int(rng.integers(4, 10)))
    return split(ds, "implicit", seed).train


def _slack(train, spec):
    """Largest overshoot a whole-user (or whole-node) sampler may produce."""
    if not spec.per_user:
        return 0
    if spec.family in (Family.CENTRALITY,):
        deg = np.asarray(adjacency(train).sum(axis=1)).ravel()
        return int(deg.max()) - 1
    return int(train.user_degree.max()) - 1


def check_contract(train, spec, **kw):
    res = sample(train, spec, proxy_options=QUICK_PROXY, **kw)
    target = target_count(train, spec.p)
    assert res.target_count == target
    assert res.actual_count == len(res.subset) == len(res.provenance)
    assert target <= res.actual_count <= target + _slack(train, spec)
    # a subset of train, sharing its id space
    assert np.all(np.diff(res.provenance) > 0)
    assert res.subset.num_users == train.num_users
    assert np.array_equal(res.subset.users, train.users[res.provenance])
    assert np.array_equal(res.subset.items, train.items[res.provenance])
    again = sample(train, spec, proxy_options=QUICK_PROXY, **kw)
    assert np.array_equal(again.provenance, res.provenance)
    return res


@pytest.mark.parametrize("name", SAMPLER_NAMES)
@given(seed=st.integers(0, 10_000), p=st.sampled_from([80, 60, 40, 20, 10]))
@settings(max_examples=10)
def test_sampler_contract(name, seed, p):
    check_contract(_train(seed), parse_sampler(name, p, seed))


@pytest.mark.parametrize("name", SAMPLER_NAMES)
def test_full_percentage_is_identity(name, toy_split):
    res = sample(toy_split.train, parse_sampler(name, 100))
    assert np.array_equal(res.provenance, np.arange(len(toy_split.train)))


@pytest.mark.parametrize("name", NON_SVP)
def test_seed_changes_random_samplers(name, toy_split):
    a = sample(toy_split.train, parse_sampler(name, 30, 0))
    b = sample(toy_split.train, parse_sampler(name, 30, 1))
    deterministic = name in ("head_user", "centrality")
    assert np.array_equal(a.provenance, b.provenance) == deterministic


def test_sixteen_distinct_names_round_trip():
    assert len(SAMPLER_NAMES) == len(set(SAMPLER_NAMES)) == 16
    for spec in all_samplers(20, 3):
        assert parse_sampler(spec.name, 20, 3) == spec


@pytest.mark.parametrize("bad", ["nope", "svp_cf", "svp_cf:rows:mf", "random_user:x"])
def test_unknown_names_rejected(bad):
    with pytest.raises(SamplingError):
        parse_sampler(bad)


@pytest.mark.parametrize("p", [0, -1, 101])
def test_percentage_out_of_range(p):
    with pytest.raises(SamplingError):
        SamplerSpec(Family.RANDOM_USER, p)


def test_empty_target_rejected():
    ds = from_arrays([0, 0, 0, 1, 1, 1], [0, 1, 2, 0, 1, 2])
    with pytest.raises(SamplingError, match="empty"):
        sample(ds, parse_sampler("random_interaction", 1))


def test_target_tolerates_float_noise():
    ds = from_arrays(list(range(100)), [0] * 100)
    assert target_count(ds, 29) == 29


def test_stratified_keeps_every_user(toy_split):
    tr = toy_split.train
    res = sample(tr, parse_sampler("stratified_user", 20, 4))
    assert np.array_equal(res.subset.active_users, tr.active_users)
    kept = res.subset.user_degree[tr.active_users]
    want = 0.2 * tr.user_degree[tr.active_users]
    assert np.abs(kept - want).max() < 2


def test_temporal_keeps_latest_interactions(toy_split):
    tr = toy_split.train
    res = sample(tr, parse_sampler("temporal_user", 40))
    for u in tr.active_users:
        hist = tr.user_history(u)
        kept = set(res.provenance.tolist()) & set(hist.tolist())
        assert kept == set(hist[len(hist) - len(kept):].tolist())


def test_head_user_takes_heaviest_users(toy_split):
    tr = toy_split.train
    res = sample(tr, parse_sampler("head_user", 30))
    kept = res.subset.active_users
    dropped = np.setdiff1d(tr.active_users, kept)
    assert tr.user_degree[kept].min() >= tr.user_degree[dropped].max()


def test_user_samplers_keep_whole_histories(toy_split):
    tr = toy_split.train
    for name in ("random_user", "head_user", "svp_cf:users:bias_only"):
        res = sample(tr, parse_sampler(name, 25), proxy_options=QUICK_PROXY)
        assert np.array_equal(res.subset.user_degree[res.subset.active_users],
                              tr.user_degree[res.subset.active_users])


def test_record_reports_drop_count(toy_split):
    res = sample(toy_split.train, parse_sampler("random_user", 10))
    rec = res.record()
    assert rec["num_dropped_users"] == len(np.setdiff1d(toy_split.train.active_users,
                                                        res.subset.active_users))
    assert rec["actual_count"] == res.actual_count
