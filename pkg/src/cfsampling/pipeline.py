"""Benchmark orchestration: job grid, execution, and the derived reports.

A job trains and tests one algorithm on one (dataset, scenario, seed,
sampler, p) cell. Jobs are grouped into tasks by (dataset, scenario, seed,
sampler) so a split, a proxy model and each sample are built once per task.
Workers only compute; the parent process is the single run-store writer.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
import traceback
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import benchmark as bm
from . import genie as gn
from .config import experiment_view
from .data import SplitDataset, read_manifest, split
from .featurizer import DatasetEmbedding, featurize, write_embeddings
from .recommenders import Algorithm, TrainConfig, evaluate_all, pertinent_algorithms, tune
from .runstore import RunStore
from .samplers import parse_sampler, sample

_log = logging.getLogger(__name__)

FULL = bm.FULL


@dataclass(frozen=True)
class Job:
    dataset: str
    scenario: str
    seed: int
    sampler: str
    p: float
    algorithm: str

    @property
    def key(self) -> str:
        return eval_key(self.dataset, self.scenario, self.seed, self.sampler, self.p, self.algorithm)

    @property
    def task(self) -> tuple:
        return (self.dataset, self.scenario, self.seed, self.sampler)


def eval_key(dataset, scenario, seed, sampler, p, algorithm) -> str:
    return f"{dataset}|{scenario}|seed{seed}|{sampler}|{float(p):g}|{algorithm}"


def enumerate_jobs(cfg: dict) -> list[Job]:
    """Every FULL and sampled training job implied by ``cfg``."""
    jobs = []
    for ds in cfg["datasets"]:
        for f in cfg["scenarios"]:
            algs = [a.value for a in pertinent_algorithms(f) if a.value in cfg["algorithms"]]
            for seed in cfg["seeds"]:
                jobs += [Job(ds, f, seed, FULL, 100.0, a) for a in algs]
                for s in cfg["samplers"]:
                    for p in cfg["percents"]:
                        jobs += [Job(ds, f, seed, s, float(p), a) for a in algs]
    return jobs


def base_config(cfg: dict) -> TrainConfig:
    return TrainConfig(dim=cfg["dim"], reg=cfg["reg"], max_epochs=cfg["max_epochs"],
                       patience=cfg["patience"])


def proxy_options(cfg: dict) -> dict:
    return {"epochs": cfg["proxy.epochs"], "lr": cfg["proxy.lr"]}


def grid(cfg: dict) -> dict:
    return {"lr": tuple(cfg["grid.lr"]), "dim": tuple(cfg["grid.dim"]),
            "dropout": tuple(cfg["grid.dropout"])}


# -- worker side -------------------------------------------------------------

@lru_cache(maxsize=4)
def _load(dataset_dir: str):
    return read_manifest(dataset_dir)


@lru_cache(maxsize=8)
def _split(dataset_dir: str, scenario: str, seed: int) -> SplitDataset:
    return split(_load(dataset_dir), scenario, seed)


_PROXY_CACHE: dict = {}


def _digest(indices) -> str:
    return hashlib.sha256(np.ascontiguousarray(indices, dtype=np.int64).tobytes()).hexdigest()[:16]


def _train_and_test(algorithm: str, sp: SplitDataset, cfg: dict, seed: int) -> dict:
    res = tune(Algorithm(algorithm), sp, grid(cfg), base_config(cfg), seed)
    metrics = evaluate_all(res.params, sp, "test")
    return {"metrics": {m.value: float(v) for m, v in metrics.items()},
            "config": {"lr": res.config.lr, "dim": res.config.dim, "dropout": res.config.dropout},
            "best_epoch": res.best_epoch, "best_val": float(res.best_val)}


def run_task(store_root: str, cfg: dict, chash: str, task: tuple, jobs: list[Job]) -> list[tuple]:
    """Run one task's jobs; returns (kind, record) pairs for the parent to store."""
    dataset, f, seed, sampler = task
    out: list[tuple] = []
    ddir = str(Path(store_root) / "datasets" / dataset)
    try:
        sp = _split(ddir, f, seed)
    except Exception as exc:  # noqa: BLE001 - every job of the task fails together
        return [("failures", _failure(j, chash, exc)) for j in jobs]
    by_p: dict[float, list[Job]] = defaultdict(list)
    for j in jobs:
        by_p[j.p].append(j)
    for p in sorted(by_p, reverse=True):
        try:
            if sampler == FULL:
                cell = sp
                emb_key = gn.full_key(dataset, f, seed)
                subset = sp.train
            else:
                spec = parse_sampler(sampler, p, seed)
                res = sample(sp.train, spec, f, proxy_cache=_PROXY_CACHE,
                             proxy_options=proxy_options(cfg))
                cell = replace(sp, train=res.subset)
                subset = res.subset
                emb_key = gn.sample_key(dataset, f, sampler, p, seed)
                out.append(("samples", {"key": emb_key, "config_hash": chash, "seed": seed,
                                        **res.record(), "provenance_sha256": _digest(res.provenance)}))
            emb = featurize(subset, seed=cfg["featurize.seed"])
            out.append(("embeddings", {"key": emb_key, "config_hash": chash,
                                       "vector": emb.vector.tolist()}))
        except Exception as exc:  # noqa: BLE001
            out += [("failures", _failure(j, chash, exc)) for j in by_p[p]]
            continue
        for j in by_p[p]:
            try:
                rec = _train_and_test(j.algorithm, cell, cfg, seed)
            except Exception as exc:  # noqa: BLE001
                out.append(("failures", _failure(j, chash, exc)))
                continue
            out.append(("evals", {"key": j.key, "config_hash": chash, "dataset": dataset,
                                  "scenario": f, "seed": seed, "sampler": sampler, "p": p,
                                  "algorithm": j.algorithm, "status": "ok", **rec}))
    return out


def _failure(job: Job, chash: str, exc: BaseException) -> dict:
    return {"key": job.key, "config_hash": chash, "error": f"{type(exc).__name__}: {exc}",
            "trace": traceback.format_exc(limit=3)}


# -- parent side -------------------------------------------------------------

@dataclass
class BenchmarkOutcome:
    scheduled: int
    completed: int
    failed: int
    skipped: int


def run_benchmark(store: RunStore, cfg: dict, progress=None) -> BenchmarkOutcome:
    """Run every pending job of ``cfg`` and then refresh the derived reports."""
    started = time.time()
    t0 = time.monotonic()
    chash = store.snapshot_config(experiment_view(cfg))
    jobs = enumerate_jobs(cfg)
    todo = [j for j in jobs if not store.has("evals", j.key)]
    tasks: dict[tuple, list[Job]] = defaultdict(list)
    for j in todo:
        tasks[j.task].append(j)
    done = failed = 0
    items = sorted(tasks.items(), key=lambda kv: repr(kv[0]))
    if cfg["jobs"] > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            futures = [pool.submit(run_task, str(store.root), cfg, chash, t, js) for t, js in items]
            results = (fut.result() for fut in futures)
            done, failed = _collect(store, results, progress)
    else:
        results = (run_task(str(store.root), cfg, chash, t, js) for t, js in items)
        done, failed = _collect(store, results, progress)
    refresh_reports(store, cfg)
    if todo:
        stamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started))
        store.append("timings", {"key": f"{chash}@{stamp}", "config_hash": chash, "started": stamp,
                                 "seconds": round(time.monotonic() - t0, 1), "jobs": done,
                                 "failed": failed, "workers": cfg["jobs"]})
    return BenchmarkOutcome(len(todo), done, failed, len(jobs) - len(todo))


def _collect(store: RunStore, results, progress) -> tuple[int, int]:
    done = failed = 0
    for recs in results:
        for kind, rec in recs:
            store.append(kind, rec)
            if kind == "evals":
                done += 1
            elif kind == "failures":
                failed += 1
                _log.error("job %s failed: %s", rec["key"], rec["error"])
        if progress is not None:
            progress(done, failed)
    return done, failed


def evals_for(store: RunStore, cfg: dict) -> list[dict]:
    """Successful evaluation records belonging to the configured grid."""
    wanted = {j.key for j in enumerate_jobs(cfg)}
    return [r for k, r in sorted(store.latest("evals").items()) if k in wanted]


def derive(store: RunStore, cfg: dict):
    ranks = bm.rankings(evals_for(store, cfg), roster=set(cfg["algorithms"]))
    taus = bm.tau_records(ranks)
    return ranks, taus


def refresh_reports(store: RunStore, cfg: dict) -> dict[str, Path]:
    """Recompute tau records, Ψ, P_MLE and embeddings CSV from stored evaluations."""
    ranks, taus = derive(store, cfg)
    for t in taus:
        d = t.to_dict()
        store.append("taus", {"key": _tau_key(d), **d})
    out: dict[str, Path] = {}
    if not taus:
        return out
    expected = bm.expected_cells(cfg["scenarios"], cfg["percents"], cfg["seeds"])
    table = bm.psi_table(taus, expected)
    for (d, s), summ in table.items():
        store.append("psi", {"key": f"{d}|{s}|{_digest_taus(summ.components)}", **summ.to_dict()})
    rep = store.reports
    out["psi"] = rep / "psi.csv"
    out["psi"].write_text(bm.psi_csv(table))
    out["coverage"] = rep / "psi_coverage.csv"
    out["coverage"].write_text(bm.coverage_csv(table))
    rows = bm.p_mle_grid(ranks)
    if rows:
        out["p_mle"] = rep / "p_mle.csv"
        out["p_mle"].write_text(bm.heatmap_csv(rows))
        out["p_mle_plot"] = rep / "p_mle.png"
        bm.plot_heatmap(rows, out["p_mle_plot"])
    emb = load_embeddings(store)
    if emb:
        out["embeddings"] = rep / "embeddings.csv"
        write_embeddings(out["embeddings"], emb)
    return out


def _tau_key(d: dict) -> str:
    return f"{d['dataset']}|{d['scenario']}|seed{d['seed']}|{d['sampler']}|{d['p']:g}|{d['metric']}"


def _digest_taus(comps) -> str:
    blob = json.dumps([t.to_dict() for t in comps], sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def load_embeddings(store: RunStore) -> dict[str, DatasetEmbedding]:
    return {k: DatasetEmbedding.from_vector(r["vector"]) for k, r in store.latest("embeddings").items()}


# -- genie over the store --------------------------------------------------------

def meta_examples(store: RunStore, cfg: dict) -> list[gn.GenieExample]:
    _, taus = derive(store, cfg)
    return gn.build_meta_dataset(taus, load_embeddings(store))


def genie_train(store: RunStore, cfg: dict, mode: str | None = None) -> tuple[Path, Path]:
    """Fit the genie (and the least-squares baseline) and write model + P@1 report."""
    mode = gn.Mode(mode or cfg["genie.mode"])
    examples = meta_examples(store, cfg)
    if not examples:
        raise gn.GenieError("run-store holds no meta-examples; run the benchmark first")
    seed = cfg["genie.seed"]
    parts = gn.split_meta(examples, seed)
    model = gn.train_genie(parts.train, mode, parts.validation, seed=seed, hidden=cfg["genie.hidden"],
                           lr=cfg["genie.lr"], max_steps=cfg["genie.steps"])
    model.history["pairs"] = {k: [list(p) for p in v] for k, v in parts.pairs.items()}
    path = store.models / f"genie-{mode.value}.json"
    model.save(path)
    report = genie_report(model, parts)
    rpath = store.reports / f"genie_{mode.value}.json"
    rpath.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return path, rpath


def genie_report(model: gn.GenieModel, parts: gn.MetaSplit) -> dict:
    report = {"mode": model.mode.value, "examples": {k: len(getattr(parts, k)) for k in
                                                   ("train", "validation", "test")},
              "reference_p_at_1": gn.REFERENCE_P_AT_1}
    for name in ("train", "validation", "test"):
        part = getattr(parts, name)
        if part:
            report[name] = _rounded(gn.evaluate_genie(model, part, parts.train))
    if parts.test:
        try:
            ls = gn.fit_least_squares(parts.train)
            report["least_squares_test"] = _rounded(gn.evaluate_genie(ls, parts.test, parts.train))
        except gn.GenieError:
            pass
    return report


def _rounded(d: dict) -> dict:
    return {k: (round(float(v), 10) if isinstance(v, (float, np.floating)) else v)
            for k, v in d.items()}


def materialize_candidates(train, scenario, p: float, seed: int, samplers,
                           featurize_seed: int = 0, proxy: dict | None = None):
    """Sample and embed every candidate; failures are returned, not raised."""
    emb, failed = {}, {}
    cache: dict = {}
    for name in samplers:
        try:
            res = sample(train, parse_sampler(name, p, seed), scenario, proxy_cache=cache,
                         proxy_options=proxy)
            emb[name] = featurize(res.subset, seed=featurize_seed)
        except Exception as exc:  # noqa: BLE001
            failed[name] = f"{type(exc).__name__}: {exc}"
    return emb, failed


def mean_tau_by_percent(store: RunStore, cfg: dict) -> dict[float, float]:
    return bm.mean_tau_by_percent(derive(store, cfg)[1])
