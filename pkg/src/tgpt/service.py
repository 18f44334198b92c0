"""Token-authenticated HTTP forecast service.

One checkpoint per process, loaded at startup and never mutated; requests are
pure functions of (body, checkpoint). Error contract: 401 bad token, 400
schema violation (with field path), 422 semantic violation, 503 model not
loaded.
"""

from __future__ import annotations

import math
import time
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from tgpt.conformal import calibrate, interval
from tgpt.model import CHECKPOINT_VERSION, CheckpointError, load_weights, predict_series
from tgpt.timeseries import Frequency, TimeSeries

MAX_SERIES_PER_REQUEST = 1000
MAX_POINTS_PER_SERIES = 10_000
DEFAULT_CALIBRATION_WINDOWS = 10


class SeriesIn(BaseModel):
    id: str
    start: str
    y: list[float]
    x: dict[str, list[float]] | None = None

    model_config = {"extra": "forbid"}


class ForecastRequest(BaseModel):
    freq: str
    horizon: int
    levels: list[float] | None = None
    series: list[SeriesIn]

    model_config = {"extra": "forbid"}


class SemanticError(ValueError):
    """Request is well-formed but semantically invalid (422)."""


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _format_level(level: float) -> str:
    return f"{level:g}"


def create_app(model_path: str | None, token: str) -> FastAPI:
    app = FastAPI(title="tgpt forecast service", version="1")
    started = time.monotonic()

    loaded: tuple | None = None
    if model_path:
        try:
            loaded = load_weights(model_path)
        except (OSError, CheckpointError):
            loaded = None

    @app.middleware("http")
    async def require_token(request: Request, call_next):
        if request.url.path.startswith("/v1/"):
            auth = request.headers.get("authorization", "")
            if auth != f"Bearer {token}":
                return _error(401, "unauthorized")
        return await call_next(request)

    @app.exception_handler(RequestValidationError)
    async def schema_violation(request: Request, exc: RequestValidationError):
        errors = exc.errors()
        if errors:
            first = errors[0]
            path = ".".join(str(p) for p in first.get("loc", ()) if p != "body")
            detail = f"{path or 'body'}: {first.get('msg', 'invalid')}"
        else:
            detail = "invalid request body"
        return _error(400, detail)

    @app.exception_handler(SemanticError)
    async def semantic_violation(request: Request, exc: SemanticError):
        return _error(422, str(exc))

    @app.get("/health")
    def health():
        body = {
            "status": "ok" if loaded else "unavailable",
            "model_version": str(CHECKPOINT_VERSION) if loaded else None,
            "uptime_s": time.monotonic() - started,
        }
        return JSONResponse(status_code=200 if loaded else 503, content=body)

    @app.post("/v1/forecast")
    def forecast(req: ForecastRequest):
        t0 = time.perf_counter()
        if loaded is None:
            return _error(503, "model not loaded")
        weights, config = loaded

        try:
            freq = Frequency.from_name(req.freq)
        except ValueError as exc:
            raise SemanticError(str(exc)) from None
        if req.horizon < 1 or req.horizon > config.max_horizon:
            raise SemanticError(f"horizon must lie in [1, {config.max_horizon}]")
        if not req.series:
            raise SemanticError("request contains no series")
        if len(req.series) > MAX_SERIES_PER_REQUEST:
            raise SemanticError(f"too many series (max {MAX_SERIES_PER_REQUEST})")
        levels = [float(lv) for lv in req.levels or []]
        for lv in levels:
            if not 0.0 < lv < 100.0:
                raise SemanticError(f"coverage level {lv} outside (0, 100)")

        series_list = []
        for item in req.series:
            if not item.y:
                raise SemanticError(f"series {item.id!r}: empty history")
            if len(item.y) > MAX_POINTS_PER_SERIES:
                raise SemanticError(f"series {item.id!r}: too many points "
                                    f"(max {MAX_POINTS_PER_SERIES})")
            if not all(math.isfinite(v) for v in item.y):
                raise SemanticError(f"series {item.id!r}: non-finite y values")
            try:
                start = freq.parse_ds(item.start)
            except ValueError:
                raise SemanticError(
                    f"series {item.id!r}: start {item.start!r} does not match "
                    f"the {freq.label} timestamp format") from None
            exo = item.x or {}
            if len(exo) != config.n_exo_channels:
                raise SemanticError(
                    f"series {item.id!r}: model expects {config.n_exo_channels} "
                    f"exogenous channels, got {len(exo)}")
            for name, chan in exo.items():
                if not all(math.isfinite(v) for v in chan):
                    raise SemanticError(f"series {item.id!r}: non-finite values "
                                        f"in channel {name!r}")
                if not len(item.y) <= len(chan) <= len(item.y) + req.horizon:
                    raise SemanticError(
                        f"series {item.id!r}: channel {name!r} must cover the "
                        f"history and at most {req.horizon} future steps")
            try:
                series_list.append(TimeSeries(item.id, start, freq,
                                              np.array(item.y), exo))
            except ValueError as exc:
                raise SemanticError(str(exc)) from None

        def forecaster(history, h):
            return predict_series(weights, config, history, h)

        out = []
        for s in series_list:
            try:
                fc = forecaster(s, req.horizon)
            except ValueError as exc:
                raise SemanticError(f"series {s.id!r}: {exc}") from None
            entry: dict[str, Any] = {
                "id": s.id,
                "ds": [freq.format_ds(freq.step(s.start, len(s) + j))
                       for j in range(req.horizon)],
                "yhat": [float(v) for v in fc.values],
            }
            if levels:
                feasible = (len(s) - 1) // req.horizon
                n_windows = min(DEFAULT_CALIBRATION_WINDOWS, feasible)
                if n_windows >= 1:
                    store = calibrate(forecaster, s, req.horizon, n_windows)
                    iv = interval(fc, store, levels)
                    entry["lo"] = {_format_level(lv): [float(v) for v in iv.lo[k]]
                                   for k, lv in enumerate(levels)}
                    entry["hi"] = {_format_level(lv): [float(v) for v in iv.hi[k]]
                                   for k, lv in enumerate(levels)}
            out.append(entry)
        return {
            "forecasts": out,
            "model_version": str(CHECKPOINT_VERSION),
            "timing_ms": (time.perf_counter() - t0) * 1e3,
        }

    @app.exception_handler(Exception)
    async def runtime_error(request: Request, exc: Exception):
        return _error(500, "internal error")

    return app
