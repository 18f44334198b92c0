"""Classical per-series forecasters.

These serve two roles in the benchmark harness: competitors, and the
normalization base for the relative error metrics (SeasonalNaive). All are
deterministic pure functions of the input history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PointForecast",
    "zero_model",
    "historic_average",
    "seasonal_naive",
    "theta",
    "croston_classic",
]

# one-sided 95% normal quantile: two-sided 90% significance for the
# seasonality autocorrelation test
_SEASONALITY_Z = 1.6448536269514722

CROSTON_ALPHA = 0.1
THETA_ALPHA_GRID = np.round(np.arange(0.01, 1.00, 0.01), 2)


@dataclass(frozen=True)
class PointForecast:
    """Point forecast for one series over a fixed horizon."""

    series_id: str
    horizon: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or vals.size != self.horizon:
            raise ValueError(f"forecast for {self.series_id!r} has {vals.size} values, "
                             f"expected horizon {self.horizon}")
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"forecast for {self.series_id!r} contains non-finite values")


def _history(series) -> tuple[str, np.ndarray]:
    """Accept a TimeSeries or a bare 1-D array of observations."""
    sid = getattr(series, "id", "series")
    vals = np.asarray(getattr(series, "values", series), dtype=np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise ValueError("history must be a non-empty 1-D sequence")
    return sid, vals


def zero_model(series, horizon: int) -> PointForecast:
    """Forecast zero everywhere (scale reference for sparse data)."""
    sid, _ = _history(series)
    if horizon < 1:
        raise ValueError("horizon must be positive")
    return PointForecast(sid, horizon, np.zeros(horizon))


def historic_average(series, horizon: int) -> PointForecast:
    """Flat forecast at the arithmetic mean of the history."""
    sid, y = _history(series)
    return PointForecast(sid, horizon, np.full(horizon, y.mean()))


def seasonal_naive(series, horizon: int, season_length: int) -> PointForecast:
    """Repeat the value observed one season earlier, wrapping past one season."""
    sid, y = _history(series)
    if season_length < 1:
        raise ValueError("season_length must be positive")
    if y.size < season_length:
        raise ValueError(f"series {sid!r}: history length {y.size} shorter than "
                         f"season_length {season_length}")
    t = y.size
    out = np.empty(horizon)
    for j in range(1, horizon + 1):
        out[j - 1] = y[t + j - season_length * math.ceil(j / season_length) - 1]
    return PointForecast(sid, horizon, out)


# ---------------------------------------------------------------------------
# Theta
# ---------------------------------------------------------------------------

def _autocorrelations(y: np.ndarray, max_lag: int) -> np.ndarray:
    yc = y - y.mean()
    denom = float(yc @ yc)
    if denom == 0.0:
        return np.zeros(max_lag)
    return np.array([float(yc[k:] @ yc[:-k]) / denom for k in range(1, max_lag + 1)])


def _is_seasonal(y: np.ndarray, season_length: int) -> bool:
    """Autocorrelation at the seasonal lag against its 90% significance band."""
    if season_length <= 1 or y.size < 2 * season_length:
        return False
    r = _autocorrelations(y, season_length)
    if np.all(r == 0.0):
        return False
    limit = _SEASONALITY_Z * math.sqrt((1.0 + 2.0 * float(np.sum(r[:-1] ** 2))) / y.size)
    return abs(r[-1]) > limit


def _seasonal_indices(y: np.ndarray, s: int) -> np.ndarray | None:
    """Classical multiplicative decomposition indices, normalized to mean 1.

    Returns None when the centered moving average is not strictly positive,
    in which case the caller falls back to the non-seasonal path.
    """
    t = y.size
    if s % 2 == 0:
        kernel = np.concatenate([[0.5], np.ones(s - 1), [0.5]]) / s
    else:
        kernel = np.ones(s) / s
    cma = np.convolve(y, kernel, mode="valid")
    offset = (kernel.size - 1) // 2
    if np.any(cma <= 0.0):
        return None
    positions = (np.arange(cma.size) + offset) % s
    ratios = y[offset:offset + cma.size] / cma
    idx = np.array([ratios[positions == p].mean() for p in range(s)])
    if np.any(~np.isfinite(idx)) or np.any(idx <= 0.0):
        return None
    return idx * (s / idx.sum())


def _ses_grid(z: np.ndarray) -> tuple[float, float]:
    """SES level with the smoothing weight chosen from a dense grid.

    Level starts at the first observation; the in-sample one-step squared
    error over the remaining points selects alpha. Returns (alpha, level).
    """
    alphas = THETA_ALPHA_GRID
    level = np.full(alphas.size, z[0])
    sse = np.zeros(alphas.size)
    for t in range(1, z.size):
        err = z[t] - level
        sse += err * err
        level += alphas * err  # level = alpha*z + (1-alpha)*level
    best = int(np.argmin(sse))
    return float(alphas[best]), float(level[best])


def theta(series, horizon: int, season_length: int) -> PointForecast:
    """Theta-method forecast: average of the fitted trend line extrapolation
    and the SES level of the twice-amplified deviations line, plus half the
    trend slope per step with the exact SES-lag correction.

    Seasonal histories (autocorrelation test at the seasonal lag) are
    multiplicatively deseasonalized first and the forecast re-seasonalized.
    """
    sid, y = _history(series)
    if y.size < 3:
        raise ValueError(f"series {sid!r}: theta needs at least 3 observations")

    indices = None
    if _is_seasonal(y, season_length):
        indices = _seasonal_indices(y, season_length)
    z = y if indices is None else y / indices[np.arange(y.size) % season_length]

    t = np.arange(z.size, dtype=np.float64)
    b, a = np.polyfit(t, z, 1)
    theta2 = 2.0 * z - (a + b * t)
    alpha, level = _ses_grid(theta2)

    n = z.size
    j = np.arange(1, horizon + 1, dtype=np.float64)
    line = a + b * (n - 1 + j)
    drift = (b / 2.0) * (j - 1.0 + 1.0 / alpha - (1.0 - alpha) ** n / alpha)
    fc = 0.5 * (line + level) + drift

    if indices is not None:
        fc = fc * indices[(n + np.arange(horizon)) % season_length]
    return PointForecast(sid, horizon, fc)


# ---------------------------------------------------------------------------
# Croston
# ---------------------------------------------------------------------------

def croston_classic(series, horizon: int) -> PointForecast:
    """Croston's method: exponential smoothing (alpha=0.1) of nonzero demand
    sizes and inter-demand intervals; flat forecast of size/interval."""
    sid, y = _history(series)
    nonzero = np.flatnonzero(y)
    if nonzero.size == 0:
        raise ValueError(f"series {sid!r}: all-zero history, Croston undefined")
    sizes = y[nonzero]
    intervals = np.diff(nonzero, prepend=-1).astype(np.float64)  # first interval: steps to first demand
    size_est = sizes[0]
    interval_est = intervals[0]
    for k in range(1, sizes.size):
        size_est += CROSTON_ALPHA * (sizes[k] - size_est)
        interval_est += CROSTON_ALPHA * (intervals[k] - interval_est)
    return PointForecast(sid, horizon, np.full(horizon, size_est / interval_est))
