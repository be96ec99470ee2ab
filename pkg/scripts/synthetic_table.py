"""Synthetic 1D / 100D comparison: InDiD, BCE, BCE then InDiD, and the classic baselines.

    python3 scripts/synthetic_table.py --dims 1 100 --seeds 0 1 2 --out runs/table

Writes one metrics JSON per (dim, method, seed) and prints a mean +- std table.
"""
import argparse
import json
import time
from pathlib import Path

import numpy as np

from quickcpd.datagen import GeneratorSpec, generate
from quickcpd.experiments import evaluate_model, evaluate_offline, tune_offline
from quickcpd.metrics import default_grid
from quickcpd.offline import penalty_grid
from quickcpd.recurrent import ModelSpec
from quickcpd.training import TrainConfig, train

REGIMES = ("indid", "bce", "bce_indid")


def run(dim, seed, out, classic):
    data = generate(GeneratorSpec(dim=dim, seed=seed))
    rows = {}
    for regime in REGIMES:
        t0 = time.perf_counter()
        params, _ = train(data["train"], ModelSpec(dim), TrainConfig(regime, seed=seed))
        rep, curve = evaluate_model(params, data["test"], default_grid(), regime)
        rep.extra["train_seconds"] = time.perf_counter() - t0
        rows[regime] = rep
    if classic:
        for method in ("pelt", "binseg"):
            pen, scores = tune_offline(method, data["train"], penalty_grid(n=13))
            rows[method] = evaluate_offline(method, pen, data["test"])
    for name, rep in rows.items():
        rep.write_json(out / f"d{dim}_{name}_s{seed}.json")
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dims", type=int, nargs="+", default=[1, 100])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--out", default="runs/table")
    ap.add_argument("--no-classic", action="store_true")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    summary = {}
    for dim in args.dims:
        for seed in args.seeds:
            for name, rep in run(dim, seed, out, not args.no_classic).items():
                summary.setdefault((dim, name), []).append(rep)

    print(f"{'dim':>4} {'method':<10} {'F1':>15} {'mean DD':>13} {'AUC':>10} {'covering':>9}")
    for (dim, name), reps in summary.items():
        f1 = np.array([r.f1 or 0.0 for r in reps])
        dd = np.array([r.mean_dd for r in reps])
        auc = np.array([r.auc if r.auc is not None else np.nan for r in reps])
        cov = np.array([r.max_covering for r in reps])
        print(f"{dim:>4} {name:<10} {f1.mean():.4f}+-{f1.std():.4f} {dd.mean():6.2f}+-{dd.std():.2f} "
              f"{np.nanmean(auc) if not np.all(np.isnan(auc)) else float('nan'):10.1f} {cov.mean():9.4f}")
    (out / "summary.json").write_text(json.dumps(
        {f"{d}/{n}": [r.to_dict() for r in reps] for (d, n), reps in summary.items()}, indent=1))


if __name__ == "__main__":
    main()
