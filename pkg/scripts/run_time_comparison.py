#!/usr/bin/env python3
"""Per-series cost of batched zero-shot inference vs per-series Theta fitting.

Uses the benchmark harness timers (median of 3 runs) on a daily synthetic
corpus with multi-year histories.
"""

import argparse

from tgpt.evaluation import run_benchmark, standard_models
from tgpt.model import ModelConfig, init_weights
from tgpt.synthetic import FamilyParams, family_dataset
from tgpt.timeseries import Frequency


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-series", type=int, default=1000)
    parser.add_argument("--min-len", type=int, default=730)
    parser.add_argument("--max-len", type=int, default=1460)
    args = parser.parse_args()

    config = ModelConfig(input_length=14, max_horizon=7, d_model=32, n_heads=4,
                         n_encoder_layers=1, n_decoder_layers=1, ff_dim=64,
                         dropout=0.0)
    weights = init_weights(config, seed=0)
    ds = family_dataset(args.n_series, seed=42, freq=Frequency.DAILY,
                        params=FamilyParams(length=(args.min_len, args.max_len)))
    models = standard_models(["theta", "tgpt"], 7, weights=weights,
                             config=config, chunk_size=args.n_series)
    report = run_benchmark(ds, models, horizon=7, timing_repeats=3)
    for score in report.scores:
        total = score.fit_ms + score.predict_ms
        print(f"{score.model:>6}: {total:8.1f} ms total, "
              f"{total / report.n_series:7.3f} ms/series")
    theta_row, tgpt_row = report.scores
    ratio = ((theta_row.fit_ms + theta_row.predict_ms)
             / (tgpt_row.fit_ms + tgpt_row.predict_ms))
    print(f"speedup: {ratio:.1f}x")


if __name__ == "__main__":
    main()
