"""Benchmark protocol: last-window evaluation with relative error metrics.

rMAE aggregates absolute errors over all series and steps before dividing by
the same aggregate for the seasonal-naive base (global normalization); rRMSE
takes the per-series root of the summed squared errors first, then sums the
roots. Lower is better; the base model scores exactly 1.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from statistics import median
from typing import Callable, Sequence

import numpy as np

from tgpt.baselines import (
    PointForecast,
    croston_classic,
    historic_average,
    seasonal_naive,
    theta,
    zero_model,
)
from tgpt.model import ModelConfig, WeightStore, predict_dataset
from tgpt.timeseries import Dataset, TimeSeries, last_window_split

__all__ = [
    "UndefinedMetricError", "rmae", "rrmse", "BenchmarkModel", "ModelScore",
    "EvalReport", "standard_models", "run_benchmark", "render_report",
    "REPORT_JSON_SCHEMA",
]


class UndefinedMetricError(ArithmeticError):
    """The normalization base has zero aggregate error."""


def _validate(actuals, forecasts, base_forecasts):
    a = np.asarray(actuals, dtype=np.float64)
    f = np.asarray(forecasts, dtype=np.float64)
    b = np.asarray(base_forecasts, dtype=np.float64)
    if not (a.shape == f.shape == b.shape) or a.ndim != 2:
        raise ValueError(f"metric inputs must share one (n_series, horizon) shape; "
                         f"got {a.shape}, {f.shape}, {b.shape}")
    return a, f, b


def rmae(actuals, forecasts, base_forecasts) -> float:
    """Relative MAE, globally normalized across all series and steps."""
    a, f, b = _validate(actuals, forecasts, base_forecasts)
    denom = np.abs(a - b).sum()
    if denom == 0.0:
        raise UndefinedMetricError("base forecast is perfect; rMAE undefined")
    return float(np.abs(a - f).sum() / denom)


def rrmse(actuals, forecasts, base_forecasts) -> float:
    """Relative RMSE: per-series root of summed squares, then summed."""
    a, f, b = _validate(actuals, forecasts, base_forecasts)
    denom = np.sqrt(((a - b) ** 2).sum(axis=1)).sum()
    if denom == 0.0:
        raise UndefinedMetricError("base forecast is perfect; rRMSE undefined")
    return float(np.sqrt(((a - f) ** 2).sum(axis=1)).sum() / denom)


# ---------------------------------------------------------------------------
# benchmark harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkModel:
    """A named entrant: either fitted per series or predicting a whole dataset.

    Per-series entrants are timed under fit_ms (their cost is the fit+predict
    pipeline run on every series); global entrants under predict_ms.
    """

    name: str
    per_series: Callable[[TimeSeries, int], PointForecast] | None = None
    global_predict: Callable[[Dataset, int], dict[str, PointForecast]] | None = None

    def __post_init__(self):
        if (self.per_series is None) == (self.global_predict is None):
            raise ValueError(f"model {self.name!r}: exactly one of per_series / "
                             f"global_predict must be given")


@dataclass(frozen=True)
class ModelScore:
    model: str
    rmae: float | None  # None = undefined (perfect base)
    rrmse: float | None
    fit_ms: float
    predict_ms: float


@dataclass(frozen=True)
class EvalReport:
    frequency: str
    horizon: int
    n_series: int
    n_excluded: int
    scores: tuple[ModelScore, ...]


REGISTERED_MODEL_NAMES = ("zero", "histavg", "snaive", "theta", "croston", "tgpt")


def standard_models(names: Sequence[str], season_length: int,
                    weights: WeightStore | None = None,
                    config: ModelConfig | None = None,
                    chunk_size: int = 256) -> list[BenchmarkModel]:
    """Build benchmark entrants from registered names. 'tgpt' requires a
    loaded checkpoint (weights + config)."""
    out = []
    for name in names:
        if name == "zero":
            out.append(BenchmarkModel("zero", per_series=zero_model))
        elif name == "histavg":
            out.append(BenchmarkModel("histavg", per_series=historic_average))
        elif name == "snaive":
            out.append(BenchmarkModel(
                "snaive", per_series=lambda s, h: seasonal_naive(s, h, season_length)))
        elif name == "theta":
            out.append(BenchmarkModel(
                "theta", per_series=lambda s, h: theta(s, h, season_length)))
        elif name == "croston":
            out.append(BenchmarkModel("croston", per_series=croston_classic))
        elif name == "tgpt":
            if weights is None or config is None:
                raise ValueError("model 'tgpt' requires a loaded checkpoint")
            out.append(BenchmarkModel(
                "tgpt",
                global_predict=lambda ds, h: predict_dataset(weights, config, ds, h,
                                                             chunk_size=chunk_size)))
        else:
            raise ValueError(f"unknown model name {name!r}; registered: "
                             f"{', '.join(REGISTERED_MODEL_NAMES)}")
    return out


def _run_model(model: BenchmarkModel, train: Dataset, horizon: int,
               repeats: int) -> tuple[dict[str, PointForecast], float]:
    forecasts: dict[str, PointForecast] = {}
    times = []
    for rep in range(max(1, repeats)):
        t0 = time.perf_counter()
        if model.per_series is not None:
            result = {s.id: model.per_series(s, horizon) for s in train.series}
        else:
            result = model.global_predict(train, horizon)
        times.append((time.perf_counter() - t0) * 1e3)
        if rep == 0:
            forecasts = result
    return forecasts, median(times)


def run_benchmark(ds: Dataset, models: Sequence[BenchmarkModel],
                  horizon: int | None = None, season_length: int | None = None,
                  timing_repeats: int = 3) -> EvalReport:
    """Last-window benchmark of the given models with seasonal-naive base.

    Series too short for the horizon (or for the base model on the remaining
    history) are excluded and counted in the report, never silently dropped.
    """
    h = horizon if horizon is not None else ds.freq.default_horizon
    s_len = season_length if season_length is not None else ds.freq.season_length
    min_train = max(s_len, 3)
    usable = [s for s in ds.series if len(s) - h >= min_train]
    n_excluded = len(ds.series) - len(usable)
    if not usable:
        raise ValueError(f"no series long enough for horizon {h} "
                         f"(+{min_train} training points)")
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate model names: {names}")

    train, test = last_window_split(Dataset(ds.freq, tuple(usable), ds.role), h)
    actuals = np.stack([t.values for t in test.series])
    base = np.stack([seasonal_naive(train.get(t.id), h, s_len).values
                     for t in test.series])

    scores = []
    for model in models:
        forecasts, elapsed = _run_model(model, train, h, timing_repeats)
        missing = [t.id for t in test.series if t.id not in forecasts]
        if missing:
            raise ValueError(f"model {model.name!r} produced no forecast for "
                             f"{missing[:3]}...")
        fc = np.stack([forecasts[t.id].values for t in test.series])
        try:
            score_rmae = rmae(actuals, fc, base)
            score_rrmse = rrmse(actuals, fc, base)
        except UndefinedMetricError:
            score_rmae = score_rrmse = None
        fit_ms, predict_ms = (elapsed, 0.0) if model.per_series else (0.0, elapsed)
        scores.append(ModelScore(model.name, score_rmae, score_rrmse,
                                 fit_ms, predict_ms))
    return EvalReport(frequency=ds.freq.label, horizon=h, n_series=len(usable),
                      n_excluded=n_excluded, scores=tuple(scores))


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

REPORT_JSON_SCHEMA = {
    "type": "object",
    "required": ["frequency", "horizon", "n_series", "n_excluded", "models"],
    "additionalProperties": False,
    "properties": {
        "frequency": {"enum": ["hourly", "daily", "weekly", "monthly"]},
        "horizon": {"type": "integer", "minimum": 1},
        "n_series": {"type": "integer", "minimum": 1},
        "n_excluded": {"type": "integer", "minimum": 0},
        "models": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["model", "rmae", "rrmse", "fit_ms", "predict_ms"],
                "additionalProperties": False,
                "properties": {
                    "model": {"type": "string"},
                    "rmae": {"type": ["number", "null"], "minimum": 0},
                    "rrmse": {"type": ["number", "null"], "minimum": 0},
                    "fit_ms": {"type": "number", "minimum": 0},
                    "predict_ms": {"type": "number", "minimum": 0},
                },
            },
        },
    },
}


def _best_models(report: EvalReport, metric: str) -> str | None:
    defined = [(getattr(s, metric), s.model) for s in report.scores
               if getattr(s, metric) is not None]
    if not defined:
        return None
    return min(defined)[1]  # ties resolved by model-name order


def render_report(report: EvalReport, fmt: str = "text") -> str:
    """Render as 'text' (aligned table, best score per metric starred),
    'csv' (model,rmae,rrmse,fit_ms,predict_ms), or 'json'."""
    if fmt == "csv":
        lines = ["model,rmae,rrmse,fit_ms,predict_ms"]
        for s in report.scores:
            rm = "" if s.rmae is None else repr(s.rmae)
            rr = "" if s.rrmse is None else repr(s.rrmse)
            lines.append(f"{s.model},{rm},{rr},{repr(s.fit_ms)},{repr(s.predict_ms)}")
        return "\n".join(lines) + "\n"

    if fmt == "json":
        doc = {
            "frequency": report.frequency,
            "horizon": report.horizon,
            "n_series": report.n_series,
            "n_excluded": report.n_excluded,
            "models": [
                {"model": s.model, "rmae": s.rmae, "rrmse": s.rrmse,
                 "fit_ms": s.fit_ms, "predict_ms": s.predict_ms}
                for s in report.scores
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    if fmt == "text":
        best_rmae = _best_models(report, "rmae")
        best_rrmse = _best_models(report, "rrmse")

        def cell(value, best):
            if value is None:
                return "undef"
            mark = "*" if best else " "
            return f"{value:.3f}{mark}"

        header = (f"frequency={report.frequency} horizon={report.horizon} "
                  f"n_series={report.n_series} excluded={report.n_excluded}")
        lines = [header,
                 f"{'model':<10} {'rmae':>8} {'rrmse':>8} {'fit_ms':>10} {'predict_ms':>11}"]
        for s in report.scores:
            lines.append(f"{s.model:<10} {cell(s.rmae, s.model == best_rmae):>8} "
                         f"{cell(s.rrmse, s.model == best_rrmse):>8} "
                         f"{s.fit_ms:>10.1f} {s.predict_ms:>11.1f}")
        return "\n".join(lines) + "\n"

    raise ValueError(f"unknown report format {fmt!r}; expected text, csv, or json")
