"""HTTP client: long-format DataFrames in, forecast DataFrames out.

Construct with a token, call `forecast` with a table of unique_id/ds/y rows.
Transport failures and 503 responses are retried; 4xx responses map to typed
errors and are never retried.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import httpx
import pandas as pd

_VERSION = "0.1.0"
_RETRY_BACKOFF_S = 0.05


class ClientError(Exception):
    """Base class for everything this SDK raises."""


class ClientValidationError(ClientError):
    """Input table rejected locally; no request was sent."""


class AuthenticationError(ClientError):
    """Server rejected the bearer token (401)."""


class RequestSchemaError(ClientError):
    """Server rejected the request shape (400)."""


class RequestRejectedError(ClientError):
    """Server rejected the request semantics (422)."""


class ServiceUnavailableError(ClientError):
    """Service kept responding 503 after retry exhaustion."""


class TransportFailure(ClientError):
    """Network failure persisted after retry exhaustion."""


class CapabilityError(ClientError):
    """The server does not expose the requested endpoint."""


@dataclass(frozen=True)
class ClientConfig:
    base_url: str
    token: str
    timeout_s: float = 30.0
    retries: int = 2

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")


REQUIRED_COLUMNS = ("unique_id", "ds", "y")

_DS_FORMATS = {"monthly": "%Y-%m", "daily": "%Y-%m-%d", "weekly": "%Y-%m-%d",
               "hourly": "%Y-%m-%dT%H"}
_STEP_HOURS = {"hourly": 1, "daily": 24, "weekly": 168}


def _step_ds(start: str, freq: str, k: int) -> str:
    """Timestamp k grid steps after start, rendered in the wire format."""
    from datetime import datetime, timedelta

    if freq not in _DS_FORMATS:
        raise ClientValidationError(f"unknown freq {freq!r}; expected one of "
                                    f"{sorted(_DS_FORMATS)}")
    ts = datetime.strptime(start, _DS_FORMATS[freq])
    if freq == "monthly":
        total = ts.year * 12 + (ts.month - 1) + k
        ts = ts.replace(year=total // 12, month=total % 12 + 1)
    else:
        ts = ts + timedelta(hours=_STEP_HOURS[freq] * k)
    return ts.strftime(_DS_FORMATS[freq])


def _is_missing(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


def _series_items(data: pd.DataFrame) -> list[dict]:
    """Per-series request entries, first-appearance order preserved.

    Rows with a missing y are future-covariate rows and must trail the
    observed ones.
    """
    missing = [c for c in REQUIRED_COLUMNS if c not in data.columns]
    if missing:
        raise ClientValidationError(f"table is missing columns {missing}")
    if len(data) == 0:
        raise ClientValidationError("table is empty")
    exo_cols = [c for c in data.columns if c not in REQUIRED_COLUMNS]
    items = []
    for uid in data["unique_id"].drop_duplicates():
        rows = data[data["unique_id"] == uid].sort_values("ds")
        y = rows["y"].tolist()
        while y and _is_missing(y[-1]):
            y.pop()
        if not y:
            raise ClientValidationError(f"series {uid!r} has no observed values")
        if any(_is_missing(v) for v in y):
            raise ClientValidationError(
                f"series {uid!r} has missing y values before the end; fill them "
                f"or drop those rows")
        item = {"id": str(uid), "start": str(rows["ds"].iloc[0]),
                "y": [float(v) for v in y]}
        if exo_cols:
            item["x"] = {c: [float(v) for v in rows[c].tolist()] for c in exo_cols}
        items.append(item)
    return items


def forecast_payload(data: pd.DataFrame, freq: str, horizon: int,
                     levels=None) -> dict:
    """Build the service request body from a long-format table."""
    if horizon < 1:
        raise ClientValidationError("horizon must be positive")
    payload = {"freq": freq, "horizon": int(horizon),
               "series": _series_items(data)}
    if levels is not None:
        payload["levels"] = [float(lv) for lv in levels]
    return payload


def table_from_payload(payload: dict) -> pd.DataFrame:
    """Rebuild the long-format table a payload was built from.

    Timestamps are regenerated on the (start, freq) grid; trailing
    future-covariate rows come back with a missing y.
    """
    freq = payload["freq"]
    rows = []
    for item in payload["series"]:
        y = item["y"]
        exo = item.get("x", {})
        total = max([len(y), *(len(v) for v in exo.values())] if exo else [len(y)])
        for k in range(total):
            rows.append({
                "unique_id": item["id"],
                "ds": _step_ds(item["start"], freq, k),
                "y": y[k] if k < len(y) else float("nan"),
                **{c: exo[c][k] for c in exo},
            })
    return pd.DataFrame(rows)


class TgptClient:
    """Stateless client; one instance may serve concurrent callers."""

    def __init__(self, token: str, base_url: str = "http://127.0.0.1:8000",
                 timeout_s: float = 30.0, retries: int = 2, transport=None):
        self.config = ClientConfig(base_url=base_url.rstrip("/"), token=token,
                                   timeout_s=timeout_s, retries=retries)
        self._http = httpx.Client(
            base_url=self.config.base_url,
            timeout=self.config.timeout_s,
            transport=transport,
            headers={
                "Authorization": f"Bearer {self.config.token}",
                "User-Agent": f"tgpt-client/{_VERSION}",
            },
        )

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- transport ---------------------------------------------------------

    def _request(self, method: str, path: str, **kwargs) -> httpx.Response:
        attempts = self.config.retries + 1
        last_exc: Exception | None = None
        for attempt in range(attempts):
            try:
                response = self._http.request(method, path, **kwargs)
            except httpx.TransportError as exc:
                last_exc = exc
                if attempt + 1 < attempts:
                    time.sleep(_RETRY_BACKOFF_S * (attempt + 1))
                continue
            if response.status_code == 503 and attempt + 1 < attempts:
                time.sleep(_RETRY_BACKOFF_S * (attempt + 1))
                continue
            return response
        raise TransportFailure(f"{method} {path} failed after {attempts} "
                               f"attempts: {last_exc}")

    def _raise_for_status(self, response: httpx.Response):
        code = response.status_code
        if code < 400:
            return
        try:
            detail = response.json().get("error", response.text)
        except ValueError:
            detail = response.text
        if code == 401:
            raise AuthenticationError(detail)
        if code == 400:
            raise RequestSchemaError(detail)
        if code == 422:
            raise RequestRejectedError(detail)
        if code == 503:
            raise ServiceUnavailableError(detail)
        raise ClientError(f"unexpected status {code}: {detail}")

    # -- endpoints ----------------------------------------------------------

    def health(self) -> dict:
        response = self._request("GET", "/health")
        if response.status_code not in (200, 503):
            self._raise_for_status(response)
        return response.json()

    def forecast(self, data: pd.DataFrame, freq: str, horizon: int,
                 levels=None) -> pd.DataFrame:
        """Forecast every series in the table.

        Returns a long-format table with unique_id, ds, yhat and, per
        requested level L, lo_L / hi_L columns. Series order is preserved;
        row count is n_series * horizon.
        """
        payload = forecast_payload(data, freq, horizon, levels)
        response = self._request("POST", "/v1/forecast", json=payload)
        self._raise_for_status(response)
        body = response.json()
        level_keys = [f"{float(lv):g}" for lv in (levels or [])]
        rows = []
        for item in body["forecasts"]:
            for j in range(horizon):
                row = {"unique_id": item["id"], "ds": item["ds"][j],
                       "yhat": item["yhat"][j]}
                for key in level_keys:
                    lo = item.get("lo", {}).get(key)
                    hi = item.get("hi", {}).get(key)
                    row[f"lo_{key}"] = lo[j] if lo is not None else None
                    row[f"hi_{key}"] = hi[j] if hi is not None else None
                rows.append(row)
        return pd.DataFrame(rows)

    def detect_anomalies(self, data: pd.DataFrame, freq: str, level: float = 99.0,
                         horizon: int | None = None,
                         n_windows: int = 10) -> pd.DataFrame:
        """Flag observations outside the conformal band over each series tail.

        Requires a server exposing the anomaly endpoint; raises
        CapabilityError (naming the server version) otherwise.
        """
        body = {"freq": freq, "level": float(level), "n_windows": int(n_windows),
                "series": _series_items(data)}
        if horizon is not None:
            body["horizon"] = int(horizon)
        response = self._request("POST", "/v1/anomalies", json=body)
        if response.status_code == 404:
            version = self.health().get("model_version")
            raise CapabilityError(
                f"server (model_version={version}) does not support anomaly "
                f"detection")
        self._raise_for_status(response)
        flagged = response.json()["anomalies"]
        return pd.DataFrame(flagged, columns=["id", "ds", "y", "lo", "hi"])
