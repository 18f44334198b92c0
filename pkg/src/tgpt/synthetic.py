"""Seed-fixed synthetic corpora: the stand-in for a large pretraining corpus.

A family draws per-series level, trend slope, seasonal amplitude/phase, and
noise scale from fixed ranges; datasets from one family with different seeds
play the source/target roles in the transfer experiments.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np

from tgpt.timeseries import Dataset, Frequency, Role, TimeSeries

__all__ = ["FamilyParams", "family_dataset", "overfit_corpus",
           "BASE_FAMILY", "SHIFTED_FAMILY"]

_START = datetime(2010, 1, 1)


@dataclass(frozen=True)
class FamilyParams:
    """Uniform draw ranges for the trend + seasonality + noise generator."""

    level: tuple[float, float] = (20.0, 80.0)
    slope: tuple[float, float] = (-0.5, 0.5)
    amplitude: tuple[float, float] = (5.0, 20.0)
    noise: tuple[float, float] = (0.5, 2.0)
    length: tuple[int, int] = (96, 144)
    waveform: str = "sine"  # sine | square

    def __post_init__(self):
        if self.waveform not in ("sine", "square"):
            raise ValueError(f"unknown waveform {self.waveform!r}")


BASE_FAMILY = FamilyParams()
# target family for fine-tuning: stronger trends, larger seasonal swings,
# inverted-phase square seasonality
SHIFTED_FAMILY = FamilyParams(level=(120.0, 220.0), slope=(0.8, 2.0),
                              amplitude=(15.0, 40.0), noise=(0.5, 2.0),
                              waveform="square")


def _seasonal(t: np.ndarray, season: int, phase: float, waveform: str) -> np.ndarray:
    wave = np.sin(2.0 * np.pi * t / season + phase)
    if waveform == "square":
        return np.sign(wave) + 0.25 * wave
    return wave


def family_dataset(n_series: int, seed: int, params: FamilyParams = BASE_FAMILY,
                   freq: Frequency = Frequency.MONTHLY, role: Role = Role.TARGET,
                   id_prefix: str = "syn") -> Dataset:
    rng = np.random.default_rng(seed)
    series = []
    for i in range(n_series):
        n = int(rng.integers(params.length[0], params.length[1] + 1))
        level = rng.uniform(*params.level)
        slope = rng.uniform(*params.slope)
        amp = rng.uniform(*params.amplitude)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        sigma = rng.uniform(*params.noise)
        t = np.arange(n, dtype=np.float64)
        values = (level + slope * t
                  + amp * _seasonal(t, freq.season_length, phase, params.waveform)
                  + rng.normal(0.0, sigma, n))
        series.append(TimeSeries(f"{id_prefix}{i:04d}", _START, freq, values))
    return Dataset(freq, tuple(series), role=role)


def overfit_corpus(seed: int, n_series: int = 32, length: int = 96,
                   freq: Frequency = Frequency.MONTHLY) -> Dataset:
    """Noiseless mix of constants, linear trends, and sinusoids.

    Long enough that most sampled training windows carry a full input_length
    of history under the default monthly toy config."""
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    series = []
    for i in range(n_series):
        kind = i % 3
        if kind == 0:
            values = np.full(length, rng.uniform(-50.0, 50.0))
        elif kind == 1:
            values = rng.uniform(-20.0, 20.0) + rng.uniform(-2.0, 2.0) * t
        else:
            amp = rng.uniform(1.0, 10.0)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            values = rng.uniform(-10.0, 10.0) + amp * np.sin(
                2.0 * np.pi * t / freq.season_length + phase)
        series.append(TimeSeries(f"fix{i:03d}", _START, freq, values))
    return Dataset(freq, tuple(series), role=Role.SOURCE)
