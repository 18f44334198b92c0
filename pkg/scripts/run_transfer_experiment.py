#!/usr/bin/env python3
"""Desk-scale zero-shot transfer experiment.

Pretrains on one draw of the synthetic family, evaluates zero-shot on a
held-out draw against the classical baselines, and prints the benchmark
table (seasonal-naive normalized rMAE / rRMSE).
"""

import argparse
import time

from tgpt.evaluation import render_report, run_benchmark, standard_models
from tgpt.model import ModelConfig, save_weights
from tgpt.synthetic import family_dataset
from tgpt.timeseries import Role
from tgpt.training import TrainConfig, pretrain


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-source", type=int, default=2000)
    parser.add_argument("--n-eval", type=int, default=200)
    parser.add_argument("--steps", type=int, default=1200)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--lr0", type=float, default=1e-3)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--save", help="optional checkpoint output path")
    args = parser.parse_args()

    config = ModelConfig(input_length=24, max_horizon=12, d_model=32, n_heads=4,
                         n_encoder_layers=1, n_decoder_layers=1, ff_dim=64,
                         dropout=0.0)
    source = family_dataset(args.n_source, seed=101, role=Role.SOURCE)
    held_out = family_dataset(args.n_eval, seed=202)

    t0 = time.perf_counter()
    weights, trace = pretrain(source, config,
                              TrainConfig(steps=args.steps,
                                          batch_size=args.batch_size,
                                          lr0=args.lr0, seed=args.seed))
    print(f"pretrained {args.steps} steps in {time.perf_counter() - t0:.0f}s, "
          f"final loss {trace.losses[-1]:.4f}")
    if args.save:
        save_weights(weights, config, args.save)
        print(f"saved checkpoint to {args.save}")

    models = standard_models(["zero", "histavg", "snaive", "theta", "croston",
                              "tgpt"], 12, weights=weights, config=config)
    report = run_benchmark(held_out, models, horizon=12)
    print(render_report(report, "text"))


if __name__ == "__main__":
    main()
