"""Split-conformal prediction intervals from rolling-forecast residuals.

Calibration replays rolling forecasts over the series tail and keeps the
absolute residuals per horizon step (pooled across steps when fewer than
five windows are available). Intervals are symmetric around the point
forecast at the finite-sample conformal quantile. Anomaly flagging scores
each rolling window against intervals calibrated on the other windows only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from tgpt.baselines import PointForecast
from tgpt.timeseries import TimeSeries, rolling_origins

__all__ = [
    "CalibrationStore", "IntervalForecast", "AnomalyScan", "Forecaster",
    "calibrate", "conformal_quantile", "interval", "anomaly_scan",
    "detect_anomalies", "POOLING_THRESHOLD",
]

Forecaster = Callable[[TimeSeries, int], PointForecast]

POOLING_THRESHOLD = 5  # below this many windows, residuals are pooled across steps


@dataclass(frozen=True)
class CalibrationStore:
    """Sorted absolute residuals per horizon step.

    When pooled, every step shares one combined residual sequence.
    """

    step_residuals: tuple[np.ndarray, ...]
    n_windows: int
    pooled: bool

    def __post_init__(self):
        if not self.step_residuals:
            raise ValueError("calibration store has no residuals")
        for res in self.step_residuals:
            if res.size == 0:
                raise ValueError("empty residual sequence")
            if np.any(res < 0) or np.any(np.diff(res) < 0):
                raise ValueError("residuals must be sorted ascending and non-negative")

    @property
    def horizon(self) -> int:
        return len(self.step_residuals)


@dataclass(frozen=True)
class IntervalForecast:
    """Point forecast wrapped with per-level symmetric intervals."""

    point: PointForecast
    levels: tuple[float, ...]
    lo: np.ndarray  # (n_levels, horizon)
    hi: np.ndarray

    def __post_init__(self):
        h = self.point.horizon
        if self.lo.shape != (len(self.levels), h) or self.hi.shape != self.lo.shape:
            raise ValueError("interval bounds must be (n_levels, horizon)")
        if np.any(self.lo > self.point.values) or np.any(self.hi < self.point.values):
            raise ValueError("intervals must bracket the point forecast")

    def level_bounds(self, level: float) -> tuple[np.ndarray, np.ndarray]:
        i = self.levels.index(level)
        return self.lo[i], self.hi[i]


def _rolling_forecasts(forecaster: Forecaster, series: TimeSeries, horizon: int,
                       n_windows: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """(actuals, forecast) per rolling window, oldest first; each window is
    forecast from pre-cut history only (plus covariates over the window)."""
    out = []
    for cut, actuals in rolling_origins(series, horizon, n_windows):
        exo_hi = min(cut + horizon,
                     min((c.size for c in series.exogenous.values()), default=cut))
        history = series.replace_window(0, cut, exo_hi=max(exo_hi, cut))
        out.append((actuals, forecaster(history, horizon).values))
    return out


def _build_store(residuals: np.ndarray, n_windows: int) -> CalibrationStore:
    horizon = residuals.shape[1]
    pooled = n_windows < POOLING_THRESHOLD
    if pooled:
        merged = np.sort(residuals.reshape(-1))
        return CalibrationStore(tuple([merged] * horizon), n_windows, pooled=True)
    return CalibrationStore(tuple(np.sort(residuals[:, j]) for j in range(horizon)),
                            n_windows, pooled=False)


def calibrate(forecaster: Forecaster, series: TimeSeries, horizon: int,
              n_windows: int) -> CalibrationStore:
    """Collect per-step |actual - forecast| residuals over rolling windows."""
    pairs = _rolling_forecasts(forecaster, series, horizon, n_windows)
    residuals = np.stack([np.abs(a - f) for a, f in pairs])
    return _build_store(residuals, n_windows)


def conformal_quantile(sorted_residuals: np.ndarray, level: float) -> float:
    """The ceil((m+1) * level/100)-th smallest residual, clamped to the max."""
    m = sorted_residuals.size
    k = math.ceil((m + 1) * level / 100.0)
    return float(sorted_residuals[min(k, m) - 1])


def interval(point: PointForecast, cal: CalibrationStore,
             levels: Sequence[float]) -> IntervalForecast:
    """Symmetric split-conformal intervals around a point forecast."""
    levels = tuple(float(lv) for lv in levels)
    for lv in levels:
        if not 0.0 < lv < 100.0:
            raise ValueError(f"coverage level {lv} outside (0, 100)")
    if cal.horizon < point.horizon:
        raise ValueError(f"calibration covers {cal.horizon} steps, forecast needs "
                         f"{point.horizon}")
    q = np.array([[conformal_quantile(cal.step_residuals[j], lv)
                   for j in range(point.horizon)] for lv in levels])
    return IntervalForecast(point=point, levels=levels,
                            lo=point.values - q, hi=point.values + q)


@dataclass(frozen=True)
class AnomalyScan:
    """Per-timestep verdicts over the final horizon*n_windows observations,
    oldest first. tail_start is the series index of the first scored point."""

    tail_start: int
    actuals: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    flags: np.ndarray


def anomaly_scan(forecaster: Forecaster, series: TimeSeries, horizon: int,
                 level: float, n_windows: int) -> AnomalyScan:
    """Leave-future-out interval scoring of the series tail.

    Each rolling window is scored against intervals calibrated purely on the
    other windows' residuals; observations outside [lo, hi] are flagged.
    """
    if n_windows < 2:
        raise ValueError("anomaly detection needs at least 2 rolling windows")
    if not 0.0 < level < 100.0:
        raise ValueError(f"coverage level {level} outside (0, 100)")
    pairs = _rolling_forecasts(forecaster, series, horizon, n_windows)
    residuals = np.stack([np.abs(a - f) for a, f in pairs])
    n = horizon * n_windows
    actuals = np.empty(n)
    lo = np.empty(n)
    hi = np.empty(n)
    for w, (act, fc) in enumerate(pairs):
        store = _build_store(np.delete(residuals, w, axis=0), n_windows - 1)
        point = PointForecast(series.id, horizon, fc)
        wlo, whi = interval(point, store, (level,)).level_bounds(level)
        sl = slice(w * horizon, (w + 1) * horizon)
        actuals[sl], lo[sl], hi[sl] = act, wlo, whi
    flags = (actuals < lo) | (actuals > hi)
    return AnomalyScan(tail_start=len(series) - n, actuals=actuals,
                       lo=lo, hi=hi, flags=flags)


def detect_anomalies(forecaster: Forecaster, series: TimeSeries, horizon: int,
                     level: float, n_windows: int) -> np.ndarray:
    """Anomaly flags over the final horizon*n_windows observations."""
    return anomaly_scan(forecaster, series, horizon, level, n_windows).flags
