"""Algorithm rankings on full vs sampled data, Kendall's tau, Ψ and P_MLE.

Everything here is a pure reduction over evaluation records (plain dicts as
stored in the run-store), so results are bit-stable for a fixed record set.
An evaluation record looks like::

    {"dataset": "ml100k", "scenario": "implicit", "sampler": "FULL", "p": 100,
     "seed": 0, "algorithm": "MF", "status": "ok",
     "metrics": {"AUC": 0.91, "Recall@100": 0.33, "nDCG@10": 0.07}}
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .data import Scenario
from .recommenders.metrics import Metric, higher_is_better, pertinent_metrics
from .recommenders.models import pertinent_algorithms
from .samplers import GRAPH_FAMILIES, INTERACTION_FAMILIES, SVP_FAMILIES, Axis, all_samplers, parse_sampler

FULL = "FULL"


class BenchmarkError(ValueError):
    pass


# -- Kendall's tau ----------------------------------------------------------

def _as_ranks(r) -> dict:
    if isinstance(r, RankingRecord):
        return r.ranks()
    if isinstance(r, Mapping):
        return dict(r)
    r = list(r)
    if len(set(r)) != len(r):
        raise BenchmarkError("an ordered ranking cannot repeat an element")
    return {e: k for k, e in enumerate(r, 1)}


def kendall_tau(r1, r2) -> float:
    """Tie-aware Kendall tau (tau-b) between two rankings of the same elements.

    A ranking is an ordered sequence (best first), a mapping element -> rank
    (equal ranks are ties) or a :class:`RankingRecord`. When either side is a
    complete tie the coefficient is undefined; we return 1.0 if the two tie
    structures coincide and 0.0 otherwise.
    """
    a, b = _as_ranks(r1), _as_ranks(r2)
    if set(a) != set(b):
        raise BenchmarkError("rankings cover different element sets")
    keys = sorted(a, key=repr)
    if len(keys) < 2:
        raise BenchmarkError("Kendall's tau needs at least two elements")
    x = np.array([a[k] for k in keys], dtype=np.float64)
    y = np.array([b[k] for k in keys], dtype=np.float64)
    iu = np.triu_indices(len(keys), 1)
    sx = np.sign(x[:, None] - x[None, :])[iu]
    sy = np.sign(y[:, None] - y[None, :])[iu]
    n_x = int(np.count_nonzero(sx))
    n_y = int(np.count_nonzero(sy))
    if n_x == 0 or n_y == 0:
        return 1.0 if np.array_equal(sx, sy) else 0.0
    s = int(np.sum(sx * sy))
    return s / math.sqrt(n_x * n_y)


# -- records ----------------------------------------------------------------

@dataclass(frozen=True)
class RankingRecord:
    dataset: str
    scenario: Scenario
    metric: Metric
    sampler: str
    p: float
    seed: int
    order: tuple[str, ...]
    values: tuple[float, ...]

    @classmethod
    def build(cls, dataset, scenario, metric, sampler, p, seed, values: Mapping[str, float]):
        metric = Metric(metric)
        sign = -1.0 if higher_is_better(metric) else 1.0
        order = tuple(sorted(values, key=lambda a: (sign * values[a], a)))
        return cls(dataset, Scenario(scenario), metric, sampler, float(p), int(seed), order,
                   tuple(float(values[a]) for a in order))

    def position(self, algorithm: str) -> int:
        return self.order.index(algorithm) + 1

    def ranks(self) -> dict[str, int]:
        """Competition ranks; algorithms with equal metric values share a rank."""
        out, rank = {}, 0
        for k, (a, v) in enumerate(zip(self.order, self.values)):
            if k == 0 or v != self.values[k - 1]:
                rank = k + 1
            out[a] = rank
        return out

    @property
    def cell(self) -> tuple:
        return (self.dataset, self.scenario.value, self.metric.value, self.seed)


@dataclass(frozen=True)
class TauRecord:
    dataset: str
    scenario: Scenario
    metric: Metric
    sampler: str
    p: float
    seed: int
    tau: float

    def to_dict(self) -> dict:
        return {"dataset": self.dataset, "scenario": self.scenario.value,
                "metric": self.metric.value, "sampler": self.sampler, "p": self.p,
                "seed": self.seed, "tau": self.tau}

    @classmethod
    def from_dict(cls, d: Mapping) -> TauRecord:
        return cls(d["dataset"], Scenario(d["scenario"]), Metric(d["metric"]), d["sampler"],
                   float(d["p"]), int(d["seed"]), float(d["tau"]))


@dataclass(frozen=True)
class PsiSummary:
    dataset: str
    sampler: str
    psi: float
    components: tuple[TauRecord, ...] = field(repr=False)
    expected: int = 0

    @property
    def lam(self) -> float:
        return 1.0 / len(self.components)

    @property
    def coverage(self) -> str:
        return f"{len(self.components)}/{self.expected or len(self.components)}"

    def to_dict(self) -> dict:
        return {"dataset": self.dataset, "sampler": self.sampler, "psi": self.psi,
                "cells": len(self.components), "expected": self.expected or len(self.components)}


def rankings(evals, roster=None) -> list[RankingRecord]:
    """Rank the algorithms of every complete (dataset, f, sampler, p, seed, m) group.

    A group is complete when every pertinent algorithm (or every member of
    ``roster`` that is pertinent) has a successful record with a finite value.
    """
    groups: dict[tuple, dict[str, dict]] = defaultdict(dict)
    for e in evals:
        if e.get("status", "ok") != "ok":
            continue
        key = (e["dataset"], e["scenario"], e["sampler"], float(e["p"]), int(e["seed"]))
        groups[key][e["algorithm"]] = e["metrics"]
    out = []
    for (ds, f, s, p, seed), by_alg in sorted(groups.items(), key=lambda kv: repr(kv[0])):
        wanted = [a.value for a in pertinent_algorithms(f)]
        if roster is not None:
            wanted = [a for a in wanted if a in roster]
        if any(a not in by_alg for a in wanted):
            continue
        for m in pertinent_metrics(f):
            vals = {a: by_alg[a].get(m.value) for a in wanted}
            if any(v is None or not math.isfinite(v) for v in vals.values()):
                continue
            out.append(RankingRecord.build(ds, f, m, s, p, seed, vals))
    return out


def tau_records(ranks: Sequence[RankingRecord]) -> list[TauRecord]:
    """One tau per sampled ranking whose full-data counterpart exists."""
    full = {r.cell: r for r in ranks if r.sampler == FULL}
    out = []
    for r in ranks:
        if r.sampler == FULL or r.cell not in full:
            continue
        ref = full[r.cell]
        if set(ref.order) != set(r.order):
            continue
        out.append(TauRecord(r.dataset, r.scenario, r.metric, r.sampler, r.p, r.seed,
                             kendall_tau(ref, r)))
    return out


def expected_cells(scenarios, percents, seeds=(0,)) -> int:
    return sum(len(pertinent_metrics(f)) for f in scenarios) * len(percents) * len(seeds)


def compute_psi(taus: Sequence[TauRecord], dataset: str, sampler: str,
                expected: int = 0) -> PsiSummary:
    """Ψ(dataset, sampler): mean tau over the (f, m, p[, seed]) cells present.

    Missing cells shrink the normaliser instead of being imputed; ``expected``
    lets the summary report coverage.
    """
    comp = tuple(sorted((t for t in taus if t.dataset == dataset and t.sampler == sampler),
                        key=lambda t: (t.scenario.value, t.metric.value, -t.p, t.seed)))
    if not comp:
        raise BenchmarkError(f"no tau records for {dataset}/{sampler}")
    psi = math.fsum(t.tau for t in comp) / len(comp)
    return PsiSummary(dataset, sampler, psi, comp, expected)


def psi_table(taus: Sequence[TauRecord], expected: int = 0) -> dict[tuple[str, str], PsiSummary]:
    pairs = sorted({(t.dataset, t.sampler) for t in taus})
    return {k: compute_psi(taus, *k, expected=expected) for k in pairs}


def mean_tau_by_percent(taus: Sequence[TauRecord]) -> dict[float, float]:
    by: dict[float, list[float]] = defaultdict(list)
    for t in taus:
        by[t.p].append(t.tau)
    return {p: math.fsum(v) / len(v) for p, v in sorted(by.items(), reverse=True)}


# -- P_MLE --------------------------------------------------------------------

def p_mle_heatmap(ranks: Sequence[RankingRecord], scenario, p: float) -> dict[str, float]:
    """Probability-like score of each algorithm moving up after sampling at ``p``%.

    Per cell (dataset, sampler, metric, seed) an algorithm scores
    ``0.5 + (rank_full - rank_sampled) / (2 (n - 1))``; cells are averaged.
    """
    scenario = Scenario(scenario)
    full = {r.cell: r for r in ranks if r.sampler == FULL and r.scenario is scenario}
    sums: dict[str, float] = defaultdict(float)
    counts: dict[str, int] = defaultdict(int)
    for r in ranks:
        if r.sampler == FULL or r.scenario is not scenario or float(r.p) != float(p):
            continue
        ref = full.get(r.cell)
        if ref is None or set(ref.order) != set(r.order):
            continue
        n = len(r.order)
        for a in r.order:
            sums[a] += 0.5 + (ref.position(a) - r.position(a)) / (2 * (n - 1))
            counts[a] += 1
    if not counts:
        raise BenchmarkError(f"no cells for {scenario.value} at p={p}")
    return {a: sums[a] / counts[a] for a in sorted(counts)}


def p_mle_grid(ranks: Sequence[RankingRecord]) -> list[tuple[str, str, float, float]]:
    """(scenario, algorithm, p, P_MLE) rows for every scenario/percent with data."""
    rows = []
    keys = sorted({(r.scenario.value, r.p) for r in ranks if r.sampler != FULL},
                  key=lambda k: (k[0], -k[1]))
    for f, p in keys:
        try:
            heat = p_mle_heatmap(ranks, f, p)
        except BenchmarkError:
            continue
        rows += [(f, a, p, v) for a, v in heat.items()]
    return rows


# -- output -------------------------------------------------------------------

def sampler_group(name: str) -> str:
    spec = parse_sampler(name)
    if spec.family in SVP_FAMILIES:
        return "user" if spec.axis is Axis.USERS else "interaction"
    if spec.family in INTERACTION_FAMILIES:
        return "interaction"
    if spec.family in GRAPH_FAMILIES:
        return "graph"
    return "user"


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def psi_csv(table: Mapping[tuple[str, str], PsiSummary]) -> str:
    """Samplers as rows (grouped, reporting order), datasets as columns, plus the average."""
    datasets = sorted({d for d, _ in table})
    known = [s.name for s in all_samplers()]
    extra = sorted({s for _, s in table} - set(known))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "sampler", *datasets, "average"])
    for s in known + extra:
        vals = [table[(d, s)].psi if (d, s) in table else None for d in datasets]
        present = [v for v in vals if v is not None]
        if not present:
            continue
        avg = math.fsum(present) / len(present)
        w.writerow([sampler_group(s), s, *map(_fmt, vals), _fmt(avg)])
    return buf.getvalue()


def coverage_csv(table: Mapping[tuple[str, str], PsiSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "sampler", "psi", "cells", "expected"])
    for (d, s), summ in sorted(table.items()):
        row = summ.to_dict()
        w.writerow([d, s, _fmt(summ.psi), row["cells"], row["expected"]])
    return buf.getvalue()


def heatmap_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "algorithm", "p", "p_mle"])
    for f, a, p, v in rows:
        w.writerow([f, a, f"{p:g}", _fmt(v)])
    return buf.getvalue()


def plot_heatmap(rows, path) -> None:
    """One panel per scenario: algorithms down, percents across."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    scenarios = sorted({r[0] for r in rows})
    if not scenarios:
        raise BenchmarkError("nothing to plot")
    fig, axes = plt.subplots(1, len(scenarios), figsize=(4.2 * len(scenarios), 3.2), squeeze=False)
    for ax, f in zip(axes[0], scenarios):
        sub = [r for r in rows if r[0] == f]
        algs = sorted({r[1] for r in sub})
        ps = sorted({r[2] for r in sub}, reverse=True)
        grid = np.full((len(algs), len(ps)), np.nan)
        for _, a, p, v in sub:
            grid[algs.index(a), ps.index(p)] = v
        im = ax.imshow(grid, vmin=0.0, vmax=1.0, cmap="RdBu_r", aspect="auto")
        ax.set_xticks(range(len(ps)), [f"{p:g}" for p in ps])
        ax.set_yticks(range(len(algs)), algs)
        ax.set_xlabel("% retained")
        ax.set_title(f)
        for i in range(len(algs)):
            for j in range(len(ps)):
                if not np.isnan(grid[i, j]):
                    ax.text(j, i, f"{grid[i, j]:.2f}", ha="center", va="center", fontsize=7)
    fig.colorbar(im, ax=axes[0].tolist(), shrink=0.8, label="P(moves up)")
    # no version stamp, so reruns produce the same bytes
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
