"""Interaction, user and graph sampling strategies over a train set.

Every sampler retains roughly ``p%`` of the train interactions and returns a
:class:`SampleResult`. Interaction samplers hit ``floor(p/100 * |train|)``
exactly; user and graph samplers never split a user (node) and may overshoot
by less than one user's (node's) degree.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import graph
from .data import Dataset, Scenario

PERCENTS = (80, 60, 40, 20, 10, 1)


class Family(str, Enum):
    RANDOM_INTERACTION = "random_interaction"
    STRATIFIED_USER = "stratified_user"
    TEMPORAL_USER = "temporal_user"
    RANDOM_USER = "random_user"
    HEAD_USER = "head_user"
    CENTRALITY = "centrality"
    RANDOM_WALK = "random_walk"
    FOREST_FIRE = "forest_fire"
    SVP_CF = "svp_cf"
    SVP_CF_PROP = "svp_cf_prop"


class Axis(str, Enum):
    INTERACTIONS = "interactions"
    USERS = "users"


class Proxy(str, Enum):
    BIAS = "bias_only"
    MF = "mf"


INTERACTION_FAMILIES = {Family.RANDOM_INTERACTION, Family.STRATIFIED_USER, Family.TEMPORAL_USER}
USER_FAMILIES = {Family.RANDOM_USER, Family.HEAD_USER}
GRAPH_FAMILIES = {Family.CENTRALITY, Family.RANDOM_WALK, Family.FOREST_FIRE}
SVP_FAMILIES = {Family.SVP_CF, Family.SVP_CF_PROP}

DEFAULT_HYPERPARAMETERS = {
    Family.CENTRALITY: {"damping": 0.85, "tol": 1e-8, "max_iter": 200},
    Family.RANDOM_WALK: {"restart": 0.15, "stall_factor": 100},
    Family.FOREST_FIRE: {"burn": 0.7},
}


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerSpec:
    family: Family
    p: float = 10.0
    seed: int = 0
    axis: Axis | None = None
    proxy: Proxy | None = None
    hyperparameters: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not (0 < self.p <= 100):
            raise SamplingError(f"p must lie in (0, 100], got {self.p}")
        if self.family in SVP_FAMILIES:
            object.__setattr__(self, "axis", Axis(self.axis or Axis.INTERACTIONS))
            object.__setattr__(self, "proxy", Proxy(self.proxy or Proxy.BIAS))
        elif self.axis is not None or self.proxy is not None:
            raise SamplingError(f"{self.family.value} takes no axis/proxy")

    @property
    def name(self) -> str:
        if self.family in SVP_FAMILIES:
            return f"{self.family.value}:{self.axis.value}:{self.proxy.value}"
        return self.family.value

    @property
    def per_user(self) -> bool:
        """True when whole users (or graph nodes) are retained."""
        if self.family in SVP_FAMILIES:
            return self.axis is Axis.USERS
        return self.family not in INTERACTION_FAMILIES

    def param(self, key: str):
        if key in self.hyperparameters:
            return self.hyperparameters[key]
        return DEFAULT_HYPERPARAMETERS.get(self.family, {})[key]

    def with_p(self, p: float, seed: int | None = None) -> SamplerSpec:
        return SamplerSpec(self.family, p, self.seed if seed is None else seed, self.axis,
                           self.proxy, dict(self.hyperparameters))

    def to_dict(self) -> dict:
        return {"family": self.family.value, "p": self.p, "seed": self.seed,
                "axis": self.axis.value if self.axis else None,
                "proxy": self.proxy.value if self.proxy else None,
                "hyperparameters": dict(sorted(self.hyperparameters.items()))}


def parse_sampler(name: str, p: float = 10.0, seed: int = 0, **hyper) -> SamplerSpec:
    """Spec from a canonical name such as ``random_walk`` or ``svp_cf_prop:users:mf``."""
    parts = name.split(":")
    try:
        family = Family(parts[0])
    except ValueError:
        raise SamplingError(f"unknown sampler {name!r}") from None
    if family in SVP_FAMILIES:
        if len(parts) != 3:
            raise SamplingError(f"{family.value} needs the form {family.value}:<axis>:<proxy>")
        try:
            return SamplerSpec(family, p, seed, Axis(parts[1]), Proxy(parts[2]), hyper)
        except ValueError:
            raise SamplingError(f"unknown sampler {name!r}") from None
    if len(parts) != 1:
        raise SamplingError(f"unknown sampler {name!r}")
    return SamplerSpec(family, p, seed, hyperparameters=hyper)


def all_samplers(p: float = 10.0, seed: int = 0) -> list[SamplerSpec]:
    """The sixteen strategies, in reporting order."""
    out = [SamplerSpec(Family.RANDOM_INTERACTION, p, seed),
           SamplerSpec(Family.STRATIFIED_USER, p, seed),
           SamplerSpec(Family.TEMPORAL_USER, p, seed)]
    for fam in (Family.SVP_CF, Family.SVP_CF_PROP):
        for proxy in (Proxy.MF, Proxy.BIAS):
            out.append(SamplerSpec(fam, p, seed, Axis.INTERACTIONS, proxy))
    out += [SamplerSpec(Family.RANDOM_USER, p, seed), SamplerSpec(Family.HEAD_USER, p, seed)]
    for fam in (Family.SVP_CF, Family.SVP_CF_PROP):
        for proxy in (Proxy.MF, Proxy.BIAS):
            out.append(SamplerSpec(fam, p, seed, Axis.USERS, proxy))
    out += [SamplerSpec(Family.CENTRALITY, p, seed), SamplerSpec(Family.RANDOM_WALK, p, seed),
            SamplerSpec(Family.FOREST_FIRE, p, seed)]
    return out


SAMPLER_NAMES = tuple(s.name for s in all_samplers())


@dataclass(frozen=True, eq=False)
class SampleResult:
    subset: Dataset
    target_count: int
    actual_count: int
    spec: SamplerSpec
    provenance: np.ndarray
    dropped_users: np.ndarray

    def record(self) -> dict:
        return {"sampler": self.spec.name, "spec": self.spec.to_dict(),
                "target_count": int(self.target_count), "actual_count": int(self.actual_count),
                "num_dropped_users": int(len(self.dropped_users))}


def target_count(train: Dataset, p: float) -> int:
    # tolerate float noise such as 0.29 * 100 = 28.999999999999996
    return int(math.floor(p / 100.0 * len(train) + 1e-9))


def _result(train: Dataset, spec: SamplerSpec, indices, target: int) -> SampleResult:
    idx = np.sort(np.asarray(indices, dtype=np.int64))
    if len(np.unique(idx)) != len(idx):
        raise AssertionError("sampler retained an interaction twice")
    subset = train.subset(idx, f"{train.name}|{spec.name}@{spec.p:g}")
    dropped = np.setdiff1d(train.active_users, subset.active_users)
    return SampleResult(subset, target, len(idx), spec, idx, dropped)


# interaction sampling ---------------------------------------------------------

def random_interaction(train: Dataset, spec: SamplerSpec) -> SampleResult:
    target = _checked_target(train, spec)
    rng = np.random.default_rng(spec.seed)
    return _result(train, spec, rng.choice(len(train), size=target, replace=False), target)


def _reconcile(desired: np.ndarray, counts: np.ndarray, caps: np.ndarray, target: int,
               rng: np.random.Generator) -> np.ndarray:
    """Add/remove single interactions until ``counts`` sums to ``target``.

    Each move goes to the user with the largest rounding error in the needed
    direction; users keep at least one interaction while anyone else can give.
    Ties are broken by a seeded random key.
    """
    counts = counts.copy()
    diff = target - int(counts.sum())
    tie = rng.permutation(len(counts))
    if diff > 0:
        heap = [(-(desired[u] - counts[u]), tie[u], u) for u in range(len(counts)) if counts[u] < caps[u]]
        heapq.heapify(heap)
        for _ in range(diff):
            _, t, u = heapq.heappop(heap)
            counts[u] += 1
            if counts[u] < caps[u]:
                heapq.heappush(heap, (-(desired[u] - counts[u]), t, u))
    elif diff < 0:
        # tier 0: users above one interaction; tier 1: users at exactly one
        heap = [(int(counts[u] <= 1), -(counts[u] - desired[u]), tie[u], u)
                for u in range(len(counts)) if counts[u] > 0]
        heapq.heapify(heap)
        for _ in range(-diff):
            _, _, t, u = heapq.heappop(heap)
            counts[u] -= 1
            if counts[u] > 0:
                heapq.heappush(heap, (int(counts[u] <= 1), -(counts[u] - desired[u]), t, u))
    return counts


def _per_user_counts(train: Dataset, spec: SamplerSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    users = train.active_users
    n_u = train.user_degree[users]
    desired = spec.p / 100.0 * n_u
    counts = np.clip(np.floor(desired + 0.5).astype(np.int64), 1, n_u)
    return users, _reconcile(desired, counts, n_u, _checked_target(train, spec), rng)


def stratified_user(train: Dataset, spec: SamplerSpec) -> SampleResult:
    rng = np.random.default_rng(spec.seed)
    users, counts = _per_user_counts(train, spec, rng)
    keep = []
    for u, k in zip(users, counts):
        if k:
            hist = train.user_history(u)
            keep.append(rng.choice(hist, size=k, replace=False))
    return _result(train, spec, np.concatenate(keep), int(counts.sum()))


def temporal_user(train: Dataset, spec: SamplerSpec) -> SampleResult:
    rng = np.random.default_rng(spec.seed)
    users, counts = _per_user_counts(train, spec, rng)
    keep = [train.user_history(u)[len(train.user_history(u)) - k:]
            for u, k in zip(users, counts) if k]
    return _result(train, spec, np.concatenate(keep), int(counts.sum()))


# user sampling ----------------------------------------------------------------

def _take_users(train: Dataset, spec: SamplerSpec, ordered_users) -> SampleResult:
    target = _checked_target(train, spec)
    deg = train.user_degree[ordered_users]
    stop = int(np.searchsorted(np.cumsum(deg), target)) + 1
    chosen = ordered_users[:stop]
    keep = np.concatenate([train.user_history(u) for u in chosen])
    return _result(train, spec, keep, target)


def random_user(train: Dataset, spec: SamplerSpec) -> SampleResult:
    rng = np.random.default_rng(spec.seed)
    return _take_users(train, spec, rng.permutation(train.active_users))


def head_user(train: Dataset, spec: SamplerSpec) -> SampleResult:
    users = train.active_users
    order = np.lexsort((users, -train.user_degree[users]))
    return _take_users(train, spec, users[order])


# graph sampling ---------------------------------------------------------------

def centrality_sample(train: Dataset, spec: SamplerSpec) -> SampleResult:
    """Keep every edge of the top-pagerank nodes until the target is met."""
    target = _checked_target(train, spec)
    scores = graph.pagerank(graph.adjacency(train), spec.param("damping"), spec.param("tol"),
                            spec.param("max_iter"))
    order = np.lexsort((np.arange(len(scores)), -scores))
    indptr, edge, _ = graph.incidence_lists(train)
    taken = np.zeros(len(train), dtype=bool)
    count = 0
    for node in order:
        inc = edge[indptr[node]:indptr[node + 1]]
        fresh = inc[~taken[inc]]
        taken[fresh] = True
        count += len(fresh)
        if count >= target:
            break
    return _result(train, spec, np.flatnonzero(taken), target)


class _Uniforms:
    """Buffered draws from a numpy Generator (per-call draws are slow)."""

    def __init__(self, rng: np.random.Generator, size: int = 8192):
        self.rng = rng
        self.size = size
        self._buf = []
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self.rng.random(self.size).tolist()
            self._pos = 0
        self._pos += 1
        return self._buf[self._pos - 1]

    def index(self, n: int) -> int:
        return min(int(self.next() * n), n - 1)


def random_walk_sample(train: Dataset, spec: SamplerSpec) -> SampleResult:
    """Random walk with restart; each traversed edge is retained.

    When no new edge is retained for ``stall_factor * |V|`` consecutive steps
    the walk restarts from a fresh uniformly-random node.
    """
    target = _checked_target(train, spec)
    rng = np.random.default_rng(spec.seed)
    draw = _Uniforms(rng)
    indptr, edge, other = graph.incidence_lists(train)
    indptr = indptr.tolist()
    edge = edge.tolist()
    other = other.tolist()
    starts = np.flatnonzero(np.diff(np.asarray(indptr))).tolist()
    n_nodes = len(indptr) - 1
    restart = spec.param("restart")
    stall_limit = spec.param("stall_factor") * n_nodes
    taken = bytearray(len(train))
    count = 0
    start = current = starts[draw.index(len(starts))]
    stall = 0
    while count < target:
        if draw.next() < restart:
            current = start
            continue
        lo, hi = indptr[current], indptr[current + 1]
        k = lo + draw.index(hi - lo)
        e = edge[k]
        current = other[k]
        if not taken[e]:
            taken[e] = 1
            count += 1
            stall = 0
        else:
            stall += 1
            if stall >= stall_limit:
                start = current = starts[draw.index(len(starts))]
                stall = 0
    return _result(train, spec, np.flatnonzero(np.frombuffer(bytes(taken), dtype=np.uint8)), target)


def geometric_burn_count(draw: _Uniforms, burn: float) -> int:
    """Number of neighbours to burn: failures before the first stop, mean burn/(1-burn)."""
    k = 0
    while draw.next() < burn:
        k += 1
    return k


def forest_fire_sample(train: Dataset, spec: SamplerSpec) -> SampleResult:
    """Forest-fire snowball sampling; burned edges are retained.

    A fire spreads from an ignition node, burning a geometric number of
    not-yet-visited neighbours of every node it reaches. When the frontier
    empties, a new fire is ignited at a random node not yet visited; once every
    node has been visited, the visited set is cleared for the next fire.
    """
    target = _checked_target(train, spec)
    rng = np.random.default_rng(spec.seed)
    draw = _Uniforms(rng)
    burn = spec.param("burn")
    indptr, edge, other = graph.incidence_lists(train)
    indptr = indptr.tolist()
    edge = edge.tolist()
    other = other.tolist()
    nodes = np.flatnonzero(np.diff(np.asarray(indptr))).tolist()
    taken = bytearray(len(train))
    count = 0
    visited: set[int] = set()
    unvisited = list(nodes)
    frontier: deque[int] = deque()
    while count < target:
        if not frontier:
            if len(visited) >= len(nodes):
                visited.clear()
                unvisited = list(nodes)
            # lazily drop visited entries while picking a random ignition point
            while True:
                j = draw.index(len(unvisited))
                node = unvisited[j]
                unvisited[j] = unvisited[-1]
                unvisited.pop()
                if node not in visited:
                    break
            visited.add(node)
            frontier.append(node)
        v = frontier.popleft()
        lo, hi = indptr[v], indptr[v + 1]
        cand = [k for k in range(lo, hi) if other[k] not in visited]
        x = geometric_burn_count(draw, burn)
        if x and cand:
            x = min(x, len(cand))
            # partial Fisher-Yates for a uniform subset
            for t in range(x):
                s = t + draw.index(len(cand) - t)
                cand[t], cand[s] = cand[s], cand[t]
            for k in cand[:x]:
                w = other[k]
                if w in visited:
                    continue
                visited.add(w)
                frontier.append(w)
                if not taken[edge[k]]:
                    taken[edge[k]] = 1
                    count += 1
                    if count >= target:
                        break
    return _result(train, spec, np.flatnonzero(np.frombuffer(bytes(taken), dtype=np.uint8)), target)


# dispatch ---------------------------------------------------------------------

def _checked_target(train: Dataset, spec: SamplerSpec) -> int:
    target = target_count(train, spec.p)
    if target == 0:
        raise SamplingError("empty sample")
    return target


_DISPATCH = {
    Family.RANDOM_INTERACTION: random_interaction,
    Family.STRATIFIED_USER: stratified_user,
    Family.TEMPORAL_USER: temporal_user,
    Family.RANDOM_USER: random_user,
    Family.HEAD_USER: head_user,
    Family.CENTRALITY: centrality_sample,
    Family.RANDOM_WALK: random_walk_sample,
    Family.FOREST_FIRE: forest_fire_sample,
}


def sample(train: Dataset, spec: SamplerSpec, scenario: Scenario | str = Scenario.IMPLICIT,
           proxy_cache: dict | None = None, proxy_options: dict | None = None) -> SampleResult:
    """Run ``spec`` on ``train``; ``p = 100`` returns the train set unchanged.

    ``proxy_options`` (epochs, lr, dim, ...) only affect the SVP families.
    """
    if len(train) == 0:
        raise SamplingError("empty train set")
    if spec.p >= 100:
        return _result(train, spec, np.arange(len(train)), len(train))
    if spec.family in SVP_FAMILIES:
        from .svp import svp_sample
        return svp_sample(train, spec, scenario, proxy_cache=proxy_cache, **(proxy_options or {}))
    return _DISPATCH[spec.family](train, spec)
