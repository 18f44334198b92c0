"""Operator command line: pretrain, finetune, forecast, evaluate, anomalies, serve.

Exit codes: 0 success, 2 usage/config error, 3 data error, 1 runtime failure;
every failure prints one `error:<category>: <reason>` line on stderr. All file
outputs are deterministic functions of (inputs, flags, seed).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from tgpt.conformal import anomaly_scan, calibrate, interval
from tgpt.evaluation import (
    REGISTERED_MODEL_NAMES,
    render_report,
    run_benchmark,
    standard_models,
)
from tgpt.model import (
    CheckpointError,
    ModelConfig,
    default_config,
    load_weights,
    predict_series,
    save_weights,
)
from tgpt.timeseries import (
    Dataset,
    FillPolicy,
    Frequency,
    IngestError,
    Role,
    ingest_long_csv,
)
from tgpt.training import TrainConfig, finetune, pretrain

DEFAULT_TRAIN = dict(steps=1000, batch_size=256, lr0=1e-4)


class ConfigError(Exception):
    """Bad flags or config files (exit 2)."""


class DataError(Exception):
    """Bad input data or checkpoints (exit 3)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error:config: {message}", file=sys.stderr)
        raise SystemExit(2)


def _read_text(path: str, kind: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        if kind == "config":
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        raise DataError(f"cannot read {path}: {exc}") from None


def _load_dataset(path: str, freq: Frequency, role: Role = Role.TARGET,
                  fill: FillPolicy = FillPolicy.FORWARD_THEN_BACKFILL) -> Dataset:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return ingest_long_csv(fh, freq, fill, role=role)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except IngestError as exc:
        raise DataError(str(exc)) from None


def _load_checkpoint(path: str):
    try:
        return load_weights(path)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    except CheckpointError as exc:
        raise DataError(f"checkpoint {path}: {exc}") from None


def _parse_freq(name: str) -> Frequency:
    try:
        return Frequency.from_name(name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _resolve_seed(args, fallback: int = 0) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("TGPT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"TGPT_SEED must be an integer, got {env!r}") from None
    return fallback


def _train_config(args, seed: int) -> TrainConfig:
    if args.train_config:
        try:
            cfg = TrainConfig.from_json(_read_text(args.train_config, "config"))
        except ValueError as exc:
            raise ConfigError(f"train config {args.train_config}: {exc}") from None
    else:
        cfg = TrainConfig(seed=seed, **DEFAULT_TRAIN)
    if args.seed is not None or os.environ.get("TGPT_SEED") is not None:
        cfg = TrainConfig(**{**cfg.__dict__, "seed": seed})
    return cfg


def _write_trace(path: Path, trace) -> None:
    lines = ["step,loss,lr"]
    for i, (loss, lr) in enumerate(zip(trace.losses, trace.learning_rates)):
        lines.append(f"{i},{loss!r},{lr!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_pretrain(args) -> int:
    freq = _parse_freq(args.freq)
    seed = _resolve_seed(args)
    ds = _load_dataset(args.data, freq, role=Role.SOURCE)
    if args.model_config:
        try:
            model_cfg = ModelConfig.from_json(_read_text(args.model_config, "config"))
        except ValueError as exc:
            raise ConfigError(f"model config {args.model_config}: {exc}") from None
    else:
        model_cfg = default_config(freq)
    train_cfg = _train_config(args, seed)
    weights, trace = pretrain(ds, model_cfg, train_cfg)
    save_weights(weights, model_cfg, args.out)
    _write_trace(Path(f"{args.out}.loss.csv"), trace)
    print(f"wrote {args.out} ({train_cfg.steps} steps)")
    return 0


def cmd_finetune(args) -> int:
    freq = _parse_freq(args.freq)
    seed = _resolve_seed(args)
    weights, model_cfg = _load_checkpoint(args.model)
    ds = _load_dataset(args.data, freq, role=Role.TARGET)
    train_cfg = _train_config(args, seed)
    tuned, trace, _ = finetune(weights, model_cfg, ds, train_cfg)
    save_weights(tuned, model_cfg, args.out)
    _write_trace(Path(f"{args.out}.loss.csv"), trace)
    print(f"wrote {args.out} ({train_cfg.steps} steps)")
    return 0


def _format_level(level: float) -> str:
    return f"{level:g}"


def cmd_forecast(args) -> int:
    freq = _parse_freq(args.freq)
    weights, model_cfg = _load_checkpoint(args.model)
    horizon = args.h if args.h is not None else model_cfg.max_horizon
    if horizon > model_cfg.max_horizon:
        raise ConfigError(f"horizon {horizon} exceeds model max_horizon "
                          f"{model_cfg.max_horizon}")
    ds = _load_dataset(args.data, freq)
    levels = list(args.level or [])
    for lv in levels:
        if not 0 < lv < 100:
            raise ConfigError(f"coverage level {lv} outside (0, 100)")

    def tgpt_forecaster(history, h):
        return predict_series(weights, model_cfg, history, h)

    header = ["unique_id", "ds", "yhat"]
    for lv in levels:
        header += [f"lo_{_format_level(lv)}", f"hi_{_format_level(lv)}"]
    lines = [",".join(header)]
    for series in ds.series:
        fc = tgpt_forecaster(series, horizon)
        bounds = None
        if levels:
            feasible = (len(series) - 1) // horizon
            n_windows = min(args.calib_windows, feasible)
            if n_windows < 1:
                print(f"warning: series {series.id}: history too short for "
                      f"calibration, intervals omitted", file=sys.stderr)
            else:
                store = calibrate(tgpt_forecaster, series, horizon, n_windows)
                bounds = interval(fc, store, levels)
        for j in range(horizon):
            ts = freq.format_ds(freq.step(series.start, len(series) + j))
            row = [series.id, ts, repr(float(fc.values[j]))]
            for k in range(len(levels)):
                if bounds is None:
                    row += ["", ""]
                else:
                    row += [repr(float(bounds.lo[k, j])), repr(float(bounds.hi[k, j]))]
            lines.append(",".join(row))
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {args.out} ({len(ds.series)} series x {horizon} steps)")
    return 0


def cmd_evaluate(args) -> int:
    freq = _parse_freq(args.freq)
    names = [n.strip() for n in args.models.split(",") if n.strip()]
    if not names:
        raise ConfigError("--models must name at least one model")
    for n in names:
        if n not in REGISTERED_MODEL_NAMES:
            raise ConfigError(f"unknown model {n!r}; registered: "
                              f"{', '.join(REGISTERED_MODEL_NAMES)}")
    weights = config = None
    if "tgpt" in names:
        if not args.model:
            raise ConfigError("model 'tgpt' requires --model CHECKPOINT")
        weights, config = _load_checkpoint(args.model)
    ds = _load_dataset(args.data, freq)
    season = args.season_length or freq.season_length
    try:
        report = run_benchmark(
            ds, standard_models(names, season, weights=weights, config=config),
            horizon=args.h, season_length=season)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    text = render_report(report, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_anomalies(args) -> int:
    freq = _parse_freq(args.freq)
    horizon = args.h if args.h is not None else freq.default_horizon
    if not 0 < args.level < 100:
        raise ConfigError(f"coverage level {args.level} outside (0, 100)")
    if args.windows < 2:
        raise ConfigError("--windows must be at least 2")
    ds = _load_dataset(args.data, freq)

    if args.forecaster == "tgpt":
        if not args.model:
            raise ConfigError("forecaster 'tgpt' requires --model CHECKPOINT")
        weights, model_cfg = _load_checkpoint(args.model)
        if horizon > model_cfg.max_horizon:
            raise ConfigError(f"horizon {horizon} exceeds model max_horizon "
                              f"{model_cfg.max_horizon}")

        def forecaster(history, h):
            return predict_series(weights, model_cfg, history, h)
    else:
        season = args.season_length or freq.season_length
        entrant = standard_models([args.forecaster], season)[0]
        forecaster = entrant.per_series

    lines = ["unique_id,ds,y,lo,hi"]
    for series in ds.series:
        if len(series) <= horizon * args.windows:
            print(f"warning: series {series.id}: history too short for "
                  f"{args.windows} windows of {horizon}, skipped", file=sys.stderr)
            continue
        scan = anomaly_scan(forecaster, series, horizon, args.level, args.windows)
        for pos in np.flatnonzero(scan.flags):
            ts = freq.format_ds(freq.step(series.start, scan.tail_start + int(pos)))
            lines.append(f"{series.id},{ts},{scan.actuals[pos]!r},"
                         f"{scan.lo[pos]!r},{scan.hi[pos]!r}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {args.out} ({len(lines) - 1} flagged)")
    return 0


def cmd_serve(args) -> int:
    import socket

    import uvicorn

    from tgpt.service import create_app

    token = os.environ.get("TGPT_TOKEN")
    if not token:
        raise ConfigError("TGPT_TOKEN environment variable is required")
    model_path = args.model or os.environ.get("TGPT_MODEL_PATH")
    bind = args.bind or os.environ.get("TGPT_BIND", "127.0.0.1:8000")
    try:
        host, port_text = bind.rsplit(":", 1)
        port = int(port_text)
    except ValueError:
        raise ConfigError(f"--bind must be host:port, got {bind!r}") from None
    if args.port is not None:
        port = args.port

    app = create_app(model_path, token)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    bound_host, bound_port = sock.getsockname()
    print(f"listening on {bound_host}:{bound_port}", flush=True)
    config = uvicorn.Config(app, log_level="warning")
    server = uvicorn.Server(config)
    server.run(sockets=[sock])
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tgpt", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None,
                       help="rng seed (fallback: env TGPT_SEED, then config)")

    p = sub.add_parser("pretrain", help="train fresh weights on a source corpus")
    p.add_argument("--data", required=True, help="long-format CSV")
    p.add_argument("--freq", required=True, help="hourly|daily|weekly|monthly")
    p.add_argument("--model-config", help="ModelConfig JSON (default: toy config)")
    p.add_argument("--train-config", help="TrainConfig JSON (default: "
                                          "steps=1000 batch=256 lr0=1e-4)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    add_seed(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="continue training from a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--freq", required=True)
    p.add_argument("--model", required=True, help="input checkpoint")
    p.add_argument("--train-config")
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("forecast", help="zero-shot forecasts, optional intervals")
    p.add_argument("--model", required=True, help="checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--freq", required=True)
    p.add_argument("--h", type=int, default=None, help="horizon (default: model max)")
    p.add_argument("--level", type=float, nargs="*",
                   help="coverage levels for conformal intervals")
    p.add_argument("--calib-windows", type=int, default=10,
                   help="rolling calibration windows (default 10)")
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="last-window benchmark report")
    p.add_argument("--data", required=True)
    p.add_argument("--freq", required=True)
    p.add_argument("--models", required=True,
                   help=f"comma list from: {', '.join(REGISTERED_MODEL_NAMES)}")
    p.add_argument("--model", help="tgpt checkpoint (required when models include tgpt)")
    p.add_argument("--h", type=int, default=None, help="horizon override")
    p.add_argument("--season-length", type=int, default=None)
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    add_seed(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("anomalies", help="interval-based anomaly flags")
    p.add_argument("--data", required=True)
    p.add_argument("--freq", required=True)
    p.add_argument("--forecaster", default="snaive",
                   help="snaive|zero|histavg|theta|croston|tgpt (default snaive)")
    p.add_argument("--model", help="checkpoint for --forecaster tgpt")
    p.add_argument("--level", type=float, default=99.0)
    p.add_argument("--windows", type=int, default=10)
    p.add_argument("--h", type=int, default=None)
    p.add_argument("--season-length", type=int, default=None)
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(func=cmd_anomalies)

    p = sub.add_parser("serve", help="token-authenticated HTTP forecast service")
    p.add_argument("--model", help="checkpoint (fallback: env TGPT_MODEL_PATH)")
    p.add_argument("--bind", help="host:port (fallback: env TGPT_BIND)")
    p.add_argument("--port", type=int, default=None,
                   help="port override; 0 picks a free port")
    add_seed(p)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code or 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error:config: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error:data: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - single reporting point
        print(f"error:runtime: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
