"""``cfsampling`` command line.

Exit codes: 0 success, 1 failed jobs or runtime errors, 2 usage errors.
The run-store root comes from ``--store``, else ``$CFSAMPLING_STORE``, else
``./runs``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import benchmark as bm
from . import genie as gn
from . import kernels
from . import pipeline
from .config import ConfigError, resolve
from .data import DatasetError, load_dataset, read_manifest, split, write_csv, write_manifest
from .featurizer import featurize, write_embeddings
from .recommenders.metrics import Metric, pertinent_metrics
from .runstore import STORE_ENV, RunStore
from .samplers import SamplingError, parse_sampler, sample

_log = logging.getLogger("cfsampling")

METRIC_ALIASES = {"mse": Metric.MSE, "auc": Metric.AUC, "recall": Metric.RECALL,
                  "recall@100": Metric.RECALL, "ndcg": Metric.NDCG, "ndcg@10": Metric.NDCG}


class UsageError(Exception):
    pass


def _csv_list(cast=str):
    def parse(text: str):
        try:
            return [cast(t.strip()) for t in text.split(",") if t.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _percent(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < p <= 100:
        raise argparse.ArgumentTypeError(f"p must lie in (0, 100], got {text}")
    return p


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _metric(text: str) -> Metric:
    m = METRIC_ALIASES.get(text.lower())
    if m is None:
        raise argparse.ArgumentTypeError(f"unknown metric {text!r}")
    return m


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cfsampling", description=__doc__.splitlines()[0])
    ap.add_argument("--store", type=Path, help=f"run-store root (default ${STORE_ENV} or ./runs)")
    ap.add_argument("--config", type=Path, help="key = value experiment config")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="preprocess a ratings file into the run-store")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--format", choices=("csv", "tsv"), default="csv")
    p.add_argument("--min-interactions", type=int, default=None)

    p = sub.add_parser("sample", help="sample one train split to disk")
    p.add_argument("--data", required=True, help="ingested dataset name or ratings CSV")
    p.add_argument("--sampler", required=True)
    p.add_argument("--p", type=_percent, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", choices=("explicit", "implicit", "sequential"), default="implicit")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="sampler hyperparameter, e.g. burn=0.5")

    p = sub.add_parser("benchmark", help="run the full-vs-sampled job grid")
    p.add_argument("--datasets", type=_csv_list())
    p.add_argument("--samplers", type=_csv_list())
    p.add_argument("--percents", type=_csv_list(_percent))
    p.add_argument("--scenarios", type=_csv_list())
    p.add_argument("--seeds", type=_csv_list(int))
    p.add_argument("--algorithms", type=_csv_list())
    p.add_argument("--jobs", type=int)

    sub.add_parser("psi", help="recompute tau records, Ψ and P_MLE from the store")

    p = sub.add_parser("featurize", help="53-value embedding of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=None)

    g = sub.add_parser("genie", help="train, evaluate or query the sampler-ranking model")
    gsub = g.add_subparsers(dest="genie_command", required=True)
    p = gsub.add_parser("train")
    p.add_argument("--mode", choices=[m.value for m in gn.Mode])
    p.add_argument("--seed", type=int)
    p = gsub.add_parser("eval")
    p.add_argument("--mode", choices=[m.value for m in gn.Mode])
    p.add_argument("--split", choices=("train", "validation", "test"), default="test")
    p = gsub.add_parser("predict")
    p.add_argument("--mode", choices=[m.value for m in gn.Mode])
    p.add_argument("--model", type=Path)
    p.add_argument("--data", required=True)
    p.add_argument("--p", type=_percent, required=True)
    p.add_argument("--metric", type=_metric, required=True)
    p.add_argument("--scenario", choices=("explicit", "implicit", "sequential"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)

    sub.add_parser("report", help="summarise the store as markdown")
    return ap


def _config(args) -> dict:
    overrides = {}
    for key in ("datasets", "samplers", "percents", "scenarios", "seeds", "algorithms", "jobs"):
        overrides[key] = getattr(args, key, None)
    if getattr(args, "mode", None):
        overrides["genie.mode"] = args.mode
    if getattr(args, "genie_command", None) == "train" and args.seed is not None:
        overrides["genie.seed"] = args.seed
    return resolve(args.config, overrides)


def _dataset(store: RunStore, ref: str, cfg: dict):
    if store.has_dataset(ref):
        return read_manifest(store.dataset_dir(ref))
    path = Path(ref)
    if path.exists():
        fmt = "tsv" if path.suffix in (".tsv", ".data") else "csv"
        return load_dataset(path, fmt, cfg["min_interactions"], name=path.stem)
    raise UsageError(f"{ref!r} is neither an ingested dataset nor a file")


# -- commands -------------------------------------------------------------------

def cmd_ingest(args, store, cfg) -> int:
    mi = args.min_interactions if args.min_interactions is not None else cfg["min_interactions"]
    ds = load_dataset(args.input, args.format, mi, name=args.name)
    write_manifest(ds, store.dataset_dir(args.name), source=str(args.input))
    print(f"{args.name}: {ds.num_users} users, {ds.num_items} items, {len(ds)} interactions")
    return 0


def cmd_sample(args, store, cfg) -> int:
    hyper = {}
    for item in args.param:
        if "=" not in item:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        hyper[k.strip()] = _number(v.strip())
    try:
        spec = parse_sampler(args.sampler, args.p, args.seed, **hyper)
    except SamplingError as exc:
        raise UsageError(str(exc)) from None
    ds = _dataset(store, args.data, cfg)
    sp = split(ds, args.scenario, args.seed)
    res = sample(sp.train, spec, args.scenario, proxy_options=pipeline.proxy_options(cfg))
    stem = f"{ds.name}-{args.scenario}-{spec.name.replace(':', '_')}-p{args.p:g}-s{args.seed}"
    out = args.out or store.root / "samples" / stem
    out.mkdir(parents=True, exist_ok=True)
    write_csv(res.subset, out / "interactions.csv", original_ids=True)
    prov = {**res.record(), "dataset": ds.name, "scenario": args.scenario, "seed": args.seed,
            "train_size": len(sp.train), "provenance": res.provenance.tolist()}
    (out / "provenance.json").write_text(json.dumps(prov, sort_keys=True) + "\n")
    print(res.actual_count)
    return 0


def cmd_benchmark(args, store, cfg) -> int:
    if not cfg["datasets"]:
        raise UsageError("no datasets: pass --datasets or set datasets in the config")
    for name in cfg["datasets"]:
        if not store.has_dataset(name):
            raise UsageError(f"dataset {name!r} is not ingested in {store.root}")
    for name in cfg["samplers"]:
        try:
            parse_sampler(name)
        except SamplingError as exc:
            raise UsageError(str(exc)) from None

    def progress(done, failed):
        _log.info("%d jobs done, %d failed", done, failed)

    outcome = pipeline.run_benchmark(store, cfg, progress)
    print(f"jobs: {outcome.skipped} already complete, {outcome.completed} run, {outcome.failed} failed")
    psi = store.reports / "psi.csv"
    if psi.exists():
        sys.stdout.write(psi.read_text())
    return 1 if outcome.failed else 0


def cmd_psi(args, store, cfg) -> int:
    paths = pipeline.refresh_reports(store, cfg)
    if "psi" not in paths:
        print("no tau records yet", file=sys.stderr)
        return 1
    sys.stdout.write(paths["psi"].read_text())
    return 0


def cmd_featurize(args, store, cfg) -> int:
    ds = _dataset(store, args.data, cfg)
    seed = cfg["featurize.seed"] if args.seed is None else args.seed
    emb = featurize(ds, seed=seed)
    out = args.out or store.reports / f"embedding-{ds.name}.csv"
    write_embeddings(out, {ds.name: emb})
    sys.stdout.write(out.read_text())
    return 0


def _model_path(store, cfg, args) -> Path:
    if getattr(args, "model", None):
        return args.model
    return store.models / f"genie-{cfg['genie.mode']}.json"


def cmd_genie(args, store, cfg) -> int:
    if args.genie_command == "train":
        model_path, report_path = pipeline.genie_train(store, cfg)
        print(f"model: {model_path}")
        sys.stdout.write(report_path.read_text())
        return 0
    model = gn.GenieModel.load(_model_path(store, cfg, args))
    if args.genie_command == "eval":
        examples = pipeline.meta_examples(store, cfg)
        parts = gn.split_meta(examples, cfg["genie.seed"])
        part = getattr(parts, args.split)
        if not part:
            raise gn.GenieError(f"the {args.split} split is empty")
        res = pipeline._rounded(gn.evaluate_genie(model, part, parts.train))
        print(json.dumps({"split": args.split, "mode": model.mode.value, **res}, sort_keys=True, indent=2))
        return 0
    ds = _dataset(store, args.data, cfg)
    scenario = args.scenario or ("explicit" if args.metric is Metric.MSE else "implicit")
    if args.metric not in pertinent_metrics(scenario):
        raise UsageError(f"{args.metric.value} does not apply to {scenario} feedback")
    sp = split(ds, scenario, args.seed)
    full = featurize(sp.train, seed=cfg["featurize.seed"])
    cands, failed = pipeline.materialize_candidates(sp.train, scenario, args.p, args.seed,
                                                    cfg["samplers"], cfg["featurize.seed"],
                                                    pipeline.proxy_options(cfg))
    for name, err in sorted(failed.items()):
        print(f"excluded {name}: {err}", file=sys.stderr)
    ranked = gn.rank_samplers(model, full, cands, args.metric, ds.name, scenario, args.p)
    relative = model.mode is gn.Mode.RANKING
    out = sys.stdout if args.out is None else args.out.open("w", newline="")
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["rank", "sampler", "tau_hat", "relative_only"])
        for k, (name, score) in enumerate(ranked, 1):
            w.writerow([k, name, f"{score:.6f}", str(relative).lower()])
    finally:
        if args.out is not None:
            out.close()
    return 0


def cmd_report(args, store, cfg) -> int:
    paths = pipeline.refresh_reports(store, cfg)
    lines = ["# Sampling benchmark report", "", f"Run-store: `{store.root}`", ""]
    if "psi" in paths:
        _, taus = pipeline.derive(store, cfg)
        lines += ["## Ψ per sampler", "", "```", paths["psi"].read_text().rstrip(), "```", "",
                  "## Coverage", "", "```", paths["coverage"].read_text().rstrip(), "```", "",
                  "## Mean tau by percent", ""]
        lines += [f"- p={p:g}: {v:.4f}" for p, v in bm.mean_tau_by_percent(taus).items()]
        lines.append("")
    if "p_mle" in paths:
        lines += ["## P_MLE (probability of moving up after sampling)", "", "```",
                  paths["p_mle"].read_text().rstrip(), "```", "",
                  f"Heatmap: `{paths['p_mle_plot'].name}`", ""]
    for mode in gn.Mode:
        rp = store.reports / f"genie_{mode.value}.json"
        if rp.exists():
            lines += [f"## Genie ({mode.value})", "", "```json", rp.read_text().rstrip(), "```", ""]
    text = "\n".join(lines) + "\n"
    (store.reports / "report.md").write_text(text)
    sys.stdout.write(text)
    return 0


COMMANDS = {"ingest": cmd_ingest, "sample": cmd_sample, "benchmark": cmd_benchmark, "psi": cmd_psi,
            "featurize": cmd_featurize, "genie": cmd_genie, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    _log.debug("kernel backend: %s", kernels.BACKEND_NAME)
    try:
        cfg = _config(args)
        store = RunStore(args.store)
        return COMMANDS[args.command](args, store, cfg)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"cfsampling: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, gn.GenieError, bm.BenchmarkError, SamplingError, OSError) as exc:
        print(f"cfsampling: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
