"""Command-line driver: ``generate``, ``train``, ``eval`` and ``ablate-horizon``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .datagen import generate
from .detect import CusumSpec
from .experiments import (
    evaluate_cusum,
    evaluate_model,
    evaluate_offline,
    horizon_ablation,
    load_splits,
    oracle_probabilities,
    tune_cusum,
    tune_offline,
)
from .metrics import default_grid, evaluate_probabilities
from .offline import penalty_grid
from .recurrent import load_checkpoint, save_checkpoint
from .training import TrainingDiverged, train
from .types import DataError, write_split

log = logging.getLogger("quickcpd")

EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 2, 3, 4


def _out_dir(path: str, cfg: cfgmod.ExperimentConfig) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.toml").write_text(cfg.to_toml())
    return out


def cmd_generate(cfg: cfgmod.ExperimentConfig, args) -> None:
    out = _out_dir(args.out, cfg)
    for split, ds in generate(cfg.generator_spec()).items():
        write_split(ds, out / split)
    log.info("wrote dataset to %s", out)


def _train_split(cfg, data_dir):
    return load_splits(data_dir, ("train",))["train"]


def cmd_train(cfg: cfgmod.ExperimentConfig, args) -> None:
    ds = _train_split(cfg, args.data)
    if ds.dim != cfg.data.dim:
        log.info("model input_dim taken from data (%d)", ds.dim)
    out = _out_dir(args.out, cfg)
    params, tlog = train(ds, cfg.model_spec(ds.dim), cfg.train_config(), threads=args.threads)
    save_checkpoint(params, out / "model.json")
    tlog.write_jsonl(out / "train_log.jsonl")
    log.info("phases: %s", tlog.phases)


def cmd_eval(cfg: cfgmod.ExperimentConfig, args) -> None:
    if (args.checkpoint is None) == (args.baseline is None):
        raise cfgmod.ConfigError("eval needs exactly one of --checkpoint or --baseline")
    split = cfg.metrics.split
    names = ("train", split) if args.baseline in ("pelt", "binseg", "cusum") else (split,)
    splits = load_splits(args.data, tuple(dict.fromkeys(names)))
    test = splits[split]
    grid = default_grid(cfg.metrics.grid_points)
    out = _out_dir(args.out, cfg)
    curve = None
    d = cfg.detect

    if args.checkpoint is not None:
        ckpt = Path(args.checkpoint)
        if not ckpt.exists():
            raise DataError(f"checkpoint not found: {ckpt}")
        report, curve = evaluate_model(load_checkpoint(ckpt), test, grid, "model", timing=args.timing)
    elif args.baseline == "oracle":
        report, curve = evaluate_probabilities("oracle", oracle_probabilities(test), test.labels, grid)
    elif args.baseline in ("pelt", "binseg"):
        grid_pen = penalty_grid(d.penalty_min, d.penalty_max, d.penalty_count)
        best, scores = tune_offline(args.baseline, splits["train"], grid_pen, d.min_segment_len)
        report = evaluate_offline(args.baseline, best, test, d.min_segment_len,
                                  {"train_f1_by_penalty": scores}, timing=args.timing)
    else:
        base = CusumSpec(d.cusum_mu0, d.cusum_mu1, d.cusum_sigma)
        limits = np.logspace(np.log10(d.cusum_limit_min), np.log10(d.cusum_limit_max), d.cusum_limit_count)
        best, scores = tune_cusum(splits["train"], base, limits)
        report = evaluate_cusum(CusumSpec(base.mu0, base.mu1, base.sigma, best), test,
                                {"train_f1_by_limit": scores})
    report.write_json(out / "metrics.json")
    if curve is not None:
        curve.write_csv(out / "curve.csv")
    log.info("F1 %s  mean DD %.3f  AUC %s", report.f1, report.mean_dd, report.auc)


def cmd_ablate_horizon(cfg: cfgmod.ExperimentConfig, args) -> None:
    splits = load_splits(args.data)
    out = _out_dir(args.out, cfg)
    spec = cfg.model_spec(splits["train"].dim)
    rows, full = horizon_ablation(splits["train"], splits["test"], spec, cfg.train_config(),
                                  cfg.train.ablation_horizons, default_grid(cfg.metrics.grid_points),
                                  threads=args.threads)
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = list(asdict(rows[0]).keys())
        w.writerow(names)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(row).values()])
    full.write_json(out / "metrics.json")


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate-horizon": cmd_ablate_horizon,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quickcpd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value (TOML syntax); repeatable")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("generate", help="write a synthetic dataset"))
    p = sub.add_parser("train", help="train a recurrent detector")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory with a train/ split")
    p = sub.add_parser("eval", help="score a checkpoint or a baseline")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", choices=["cusum", "pelt", "binseg", "oracle"])
    p.add_argument("--timing", action="store_true", help="record inference time per sequence")
    p = sub.add_parser("ablate-horizon", help="sweep the relative delay horizon")
    common(p)
    p.add_argument("--data", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if args.threads < 1:
            raise cfgmod.ConfigError("--threads must be >= 1")
        cfg = cfgmod.load(args.config, overrides)
        COMMANDS[args.command](cfg, args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return 0


if __name__ == "__main__":
    sys.exit(main())
