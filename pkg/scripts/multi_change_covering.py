"""Covering on multi-change sequences for models trained on single-change data.

    python3 scripts/multi_change_covering.py --seeds 0 1 2

The detector is applied unchanged and every up-crossing of the threshold is
taken as a predicted change; covering is reported as the best over the grid.
"""
import argparse

from quickcpd.datagen import GeneratorSpec, generate
from quickcpd.experiments import evaluate_model, evaluate_offline, tune_offline
from quickcpd.metrics import default_grid
from quickcpd.offline import penalty_grid
from quickcpd.recurrent import ModelSpec
from quickcpd.training import TrainConfig, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--regimes", nargs="+", default=["indid", "bce", "bce_indid"])
    ap.add_argument("--classic", action="store_true", help="also score PELT tuned on multi-change train data")
    args = ap.parse_args()

    for seed in args.seeds:
        single = generate(GeneratorSpec(seed=seed))
        multi = generate(GeneratorSpec(multi=True, seed=seed))
        line = [f"seed {seed}"]
        for regime in args.regimes:
            params, _ = train(single["train"], ModelSpec(1), TrainConfig(regime, seed=seed))
            rep, _ = evaluate_model(params, multi["test"], default_grid(), regime)
            line.append(f"{regime} {rep.max_covering:.4f}")
        if args.classic:
            pen, _ = tune_offline("pelt", multi["train"], penalty_grid(n=13))
            line.append(f"pelt {evaluate_offline('pelt', pen, multi['test']).covering:.4f}")
        print("  ".join(line), flush=True)


if __name__ == "__main__":
    main()
