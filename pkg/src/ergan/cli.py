"""Command-line driver: ingest, select-k, cluster, train, generate, evaluate, pipeline.

Every command works inside a workspace directory with a fixed layout::

    dataset/      profiles.csv, train.csv, validation.csv, ingest_report.json
    clusters/     select_k.csv, cluster_model.json
    checkpoints/  gan_k<k>.ckpt, loss_k<k>.csv
    synthetic/    synthetic.csv
    reports/      l1_report.csv, hourly_stats.csv, histogram.csv, acf.csv, boxplot.csv

Settings resolve as defaults < ``--config`` JSON file < command-line flags,
and the resolved settings are echoed to ``config.json`` in the workspace.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cluster as clu
from . import data, ensemble, gan, metrics
from .neural.params import CheckpointError

log = logging.getLogger("ergan")

WORKSPACE_ENV = "ERGAN_WORKSPACE"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception, code: int):
        super().__init__(f"stage {stage} failed: {cause}")
        self.code = code


@dataclass
class RunConfig:
    input: str | None = None
    workspace: str = "ergan-workspace"
    k_range: tuple[int, int] = (2, 12)
    fixed_k: int | None = None
    train_fraction: float = 0.7
    train: gan.TrainConfig = field(default_factory=gan.TrainConfig.desk)
    M: int | None = None
    bins: int = 50
    max_lag: int = 23
    seed: int = 0
    jobs: int = 1
    svg: bool = False

    def validate(self) -> None:
        lo, hi = self.k_range
        if not (2 <= lo <= hi <= 64):
            raise UsageError(f"--k-range {lo}..{hi} must lie within 2..64")
        if self.fixed_k is not None and self.fixed_k < 1:
            raise UsageError("--k must be at least 1")
        if self.M is not None and self.M < 1:
            raise UsageError("--m must be at least 1")
        if self.bins < 1:
            raise UsageError("--bins must be at least 1")
        if not 0 <= self.max_lag <= 23:
            raise UsageError("--max-lag must lie in 0..23")
        if self.jobs < 1:
            raise UsageError("--jobs must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k_range"] = f"{self.k_range[0]}..{self.k_range[1]}"
        d["train"] = self.train.to_dict()
        return d

    # workspace paths
    @property
    def root(self) -> Path:
        return Path(self.workspace)

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)


def parse_k_range(text: str) -> tuple[int, int]:
    try:
        if isinstance(text, (list, tuple)):
            lo, hi = text
        else:
            lo, _, hi = str(text).partition("..")
        return int(lo), int(hi)
    except ValueError:
        raise UsageError(f"bad K range {text!r}; expected a..b") from None


# -- stages -------------------------------------------------------------------

def _mkdirs(cfg: RunConfig) -> None:
    for sub in ("dataset", "clusters", "checkpoints", "synthetic", "reports"):
        cfg.path(sub).mkdir(parents=True, exist_ok=True)


def _echo_config(cfg: RunConfig) -> None:
    cfg.root.mkdir(parents=True, exist_ok=True)
    with open(cfg.path("config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def run_ingest(cfg: RunConfig) -> dict:
    if not cfg.input:
        raise UsageError("ingest needs --input")
    src = Path(cfg.input)
    if not src.is_file():
        raise UsageError(f"input file {src} does not exist")
    try:
        readings = data.parse_readings(src)
    except data.EmptyInputError as exc:
        raise data.DataError(f"no profiles survived ingestion ({exc})") from exc
    seg = data.segment_daily(readings)
    dataset, constant = data.build_dataset(seg.days)
    if len(dataset) == 0:
        raise data.DataError("no profiles survived ingestion")
    train, val = data.split(dataset, cfg.train_fraction, cfg.seed)
    _mkdirs(cfg)
    data.write_dataset(dataset, cfg.path("dataset", "profiles.csv"))
    data.write_dataset(train, cfg.path("dataset", "train.csv"))
    data.write_dataset(val, cfg.path("dataset", "validation.csv"))
    report = {
        "rows_read": len(readings),
        "days_complete": len(seg.days),
        "days_dropped": seg.dropped_days,
        "readings_dropped": seg.dropped_readings,
        "constant_profiles_dropped": constant,
        "profiles": len(dataset),
        "train": len(train),
        "validation": len(val),
    }
    with open(cfg.path("dataset", "ingest_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    log.info("ingest: %s", report)
    return report


def _load(path: Path, what: str) -> data.Dataset:
    if not path.is_file():
        raise UsageError(f"{what} not found at {path}; run the earlier stage first")
    return data.read_dataset(path)


def run_select_k(cfg: RunConfig) -> clu.KSelectionReport:
    train = _load(cfg.path("dataset", "train.csv"), "training set")
    lo, hi = cfg.k_range
    if hi > len(train) - 1:
        log.warning("clamping K range upper bound %d to N-1=%d", hi, len(train) - 1)
        hi = len(train) - 1
    report = clu.select_k(train, (lo, hi), seed=cfg.seed)
    _mkdirs(cfg)
    with open(cfg.path("clusters", "select_k.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("K,db_index,chosen\n")
        for K, db in report.candidates:
            fh.write(f"{K},{db:.9g},{int(K == report.chosen_K)}\n")
    log.info("select-k: chosen K=%d", report.chosen_K)
    return report


def _chosen_k(cfg: RunConfig) -> int:
    if cfg.fixed_k is not None:
        return cfg.fixed_k
    path = cfg.path("clusters", "select_k.csv")
    if path.is_file():
        with open(path, encoding="utf-8") as fh:
            for line in fh.readlines()[1:]:
                K, _, chosen = line.strip().split(",")
                if chosen == "1":
                    return int(K)
    return run_select_k(cfg).chosen_K


def run_cluster(cfg: RunConfig) -> clu.ClusterModel:
    train = _load(cfg.path("dataset", "train.csv"), "training set")
    K = _chosen_k(cfg)
    model = clu.kmeans(train, K, seed=cfg.seed)
    _mkdirs(cfg)
    model.save(cfg.path("clusters", "cluster_model.json"))
    log.info("cluster: K=%d sizes=%s wcss=%.6g", K, model.sizes.tolist(), model.wcss)
    return model


def _train_one(args):
    k, values, config = args
    return gan.train_cluster_gan(values, config, cluster=k)


def run_train(cfg: RunConfig) -> list[gan.GanPair]:
    train = _load(cfg.path("dataset", "train.csv"), "training set")
    model_path = cfg.path("clusters", "cluster_model.json")
    if not model_path.is_file():
        raise UsageError("cluster model not found; run `cluster` first")
    model = clu.ClusterModel.load(model_path)
    if len(model.labels) != len(train):
        raise data.DataError("cluster labels do not match the training set")
    jobs = [
        (k, train.values[model.labels == k], replace(cfg.train, seed=cfg.seed + k))
        for k in range(model.K)
    ]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            pairs = list(pool.map(_train_one, jobs))
    else:
        pairs = [_train_one(j) for j in jobs]
    _mkdirs(cfg)
    for pair in pairs:
        gan.save_checkpoint(pair, cfg.path("checkpoints", f"gan_k{pair.cluster}.ckpt"))
        gan.write_history(pair, cfg.path("checkpoints", f"loss_k{pair.cluster}.csv"))
        log.info("train: cluster %d final g_loss %.6g d_loss %.6g", pair.cluster, *pair.history[-1])
    return pairs


def run_generate(cfg: RunConfig) -> data.Dataset:
    model_path = cfg.path("clusters", "cluster_model.json")
    if not model_path.is_file():
        raise UsageError("cluster model not found; run `cluster` first")
    model = clu.ClusterModel.load(model_path)
    gens = []
    for k in range(model.K):
        path = cfg.path("checkpoints", f"gan_k{k}.ckpt")
        if not path.is_file():
            raise UsageError(f"missing checkpoint {path}; run `train` first")
        gens.append(gan.load_checkpoint(path).generator_net)
    M = cfg.M if cfg.M is not None else len(model.labels)
    plan = ensemble.SynthesisPlan.from_sizes(M, model.sizes)
    synth = ensemble.synthesize(gens, plan, seed=cfg.seed)
    _mkdirs(cfg)
    data.write_dataset(synth, cfg.path("synthetic", "synthetic.csv"))
    log.info("generate: %d profiles, allocation %s", len(synth), plan.allocation.tolist())
    return synth


def run_evaluate(cfg: RunConfig, real_path=None, synth_path=None, out_dir=None) -> metrics.EvalReport:
    if real_path is None:
        real_path = cfg.path("dataset", "validation.csv")
        if real_path.is_file() and len(data.read_dataset(real_path)) == 0:
            real_path = cfg.path("dataset", "train.csv")
    real = _load(Path(real_path), "real dataset")
    synth = _load(Path(synth_path or cfg.path("synthetic", "synthetic.csv")), "synthetic dataset")
    report = metrics.evaluate(real, synth, bins=cfg.bins, max_lag=cfg.max_lag)
    metrics.write_reports(report, out_dir or cfg.path("reports"), svg=cfg.svg)
    log.info("evaluate: L1 mean %.4f variance %.4f q1 %.4f q3 %.4f", *report.l1)
    return report


def run_pipeline(cfg: RunConfig) -> metrics.EvalReport:
    stages = []
    if cfg.input:
        stages.append(("ingest", run_ingest))
    elif not cfg.path("dataset", "train.csv").is_file():
        raise UsageError("pipeline needs --input or an ingested workspace")
    if cfg.fixed_k is None:
        stages.append(("select-k", run_select_k))
    stages += [("cluster", run_cluster), ("train", run_train), ("generate", run_generate),
               ("evaluate", run_evaluate)]
    result = None
    for name, fn in stages:
        try:
            result = fn(cfg)
        except UsageError:
            raise
        except gan.TrainingError as exc:
            raise StageError(name, exc, EXIT_NUMERIC) from exc
        except (ValueError, OSError) as exc:
            raise StageError(name, exc, EXIT_DATA) from exc
    return result


# -- argument handling --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with run settings")
    common.add_argument("--workspace", help=f"workspace directory (env {WORKSPACE_ENV})")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("-v", "--verbose", action="store_true")

    k_opts = argparse.ArgumentParser(add_help=False)
    k_opts.add_argument("--k-range", help="candidate K values, e.g. 2..12")
    k_opts.add_argument("--k", type=int, dest="fixed_k", help="use this K, skipping selection")

    train_opts = argparse.ArgumentParser(add_help=False)
    train_opts.add_argument("--epochs", type=int)
    train_opts.add_argument("--batch-size", type=int)
    train_opts.add_argument("--lambda", type=float, dest="lam")
    train_opts.add_argument("--lr", type=float, help="learning rate for both networks")
    train_opts.add_argument("--hidden", type=int)
    train_opts.add_argument("--layers", type=int)
    train_opts.add_argument("--stat-mode", choices=["pattern", "hourly"])
    train_opts.add_argument("--non-saturating", action="store_true", default=None)
    train_opts.add_argument("--paper-scale", action="store_true",
                            help="full-scale training budget (10000 epochs, batch 1024)")
    train_opts.add_argument("--jobs", type=int, help="clusters trained in parallel")
    train_opts.add_argument("--log-every", type=int, help="log losses every N epochs")

    gen_opts = argparse.ArgumentParser(add_help=False)
    gen_opts.add_argument("--m", type=int, dest="M", help="number of synthetic profiles")

    eval_opts = argparse.ArgumentParser(add_help=False)
    eval_opts.add_argument("--bins", type=int)
    eval_opts.add_argument("--max-lag", type=int)
    eval_opts.add_argument("--svg", action="store_true", default=None)

    parser = _Parser(prog="ergan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="meter CSV -> normalized profiles")
    p.add_argument("--input", required=True)
    p.add_argument("--train-fraction", type=float)
    sub.add_parser("select-k", parents=[common, k_opts], help="score K by Davies-Bouldin")
    sub.add_parser("cluster", parents=[common, k_opts], help="K-means on the training set")
    sub.add_parser("train", parents=[common, train_opts], help="train one GAN per cluster")
    sub.add_parser("generate", parents=[common, gen_opts], help="sample the ensemble")
    p = sub.add_parser("evaluate", parents=[common, eval_opts], help="compare real and synthetic")
    p.add_argument("--real", help="real dataset CSV (default: workspace validation set)")
    p.add_argument("--synthetic", help="synthetic dataset CSV (default: workspace output)")
    p.add_argument("--out", help="report directory (default: workspace reports/)")
    p = sub.add_parser("pipeline", parents=[common, k_opts, train_opts, gen_opts, eval_opts],
                       help="run every stage end to end")
    p.add_argument("--input")
    p.add_argument("--train-fraction", type=float)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    file_settings: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_settings = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    train = cfg.train.to_dict()
    train.update(file_settings.pop("train", {}) or {})
    for key, value in file_settings.items():
        if key == "k_range":
            cfg.k_range = parse_k_range(value)
        elif hasattr(cfg, key):
            setattr(cfg, key, value)
        else:
            raise UsageError(f"unknown config key {key!r}")
    if os.environ.get(WORKSPACE_ENV) and "workspace" not in file_settings:
        cfg.workspace = os.environ[WORKSPACE_ENV]

    flags = vars(args)
    for key in ("workspace", "seed", "fixed_k", "M", "bins", "max_lag", "jobs", "svg", "input",
                "train_fraction"):
        if flags.get(key) is not None:
            setattr(cfg, key, flags[key])
    if flags.get("k_range"):
        cfg.k_range = parse_k_range(flags["k_range"])
    if flags.get("paper_scale"):
        train.update(epochs=10000, batch_size=1024, hidden=16, layers=5)
    for key in ("epochs", "batch_size", "lam", "hidden", "layers", "stat_mode",
                "non_saturating", "log_every"):
        if flags.get(key) is not None:
            train[key] = flags[key]
    if flags.get("lr") is not None:
        train["g_lr"] = train["d_lr"] = flags["lr"]
    train["seed"] = cfg.seed
    try:
        cfg.train = gan.TrainConfig.from_dict(train)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        if cfg.train.log_every == 0 and args.command in ("train", "pipeline"):
            cfg.train = replace(cfg.train, log_every=max(1, cfg.train.epochs // 10))
        _echo_config(cfg)
        if args.command == "ingest":
            run_ingest(cfg)
        elif args.command == "select-k":
            run_select_k(cfg)
        elif args.command == "cluster":
            run_cluster(cfg)
        elif args.command == "train":
            run_train(cfg)
        elif args.command == "generate":
            run_generate(cfg)
        elif args.command == "evaluate":
            run_evaluate(cfg, args.real, args.synthetic, args.out)
        elif args.command == "pipeline":
            run_pipeline(cfg)
    except UsageError as exc:
        print(f"ergan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"ergan: {exc}", file=sys.stderr)
        return exc.code
    except gan.TrainingError as exc:
        print(f"ergan: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (data.DataError, clu.ClusteringError, CheckpointError, ValueError, OSError) as exc:
        print(f"ergan: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
