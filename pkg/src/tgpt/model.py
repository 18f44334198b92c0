"""Windowed encoder-decoder forecasting network.

A window of history (value channel plus optional exogenous channels) is
standardized per window, projected to d_model with local (window-relative)
sinusoidal positions, encoded, and decoded into all horizon steps in one
parallel pass from learned start tokens; a linear head maps each decoder
position to one forecast step, de-normalized with the stored window scale.

Checkpoints are a binary format: magic ``TGPT``, u32 format version, a
canonical-JSON config block, per-parameter records, and a trailing CRC32
over the config+record region. All integers and floats are little-endian.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

import tgpt.autodiff as ad
from tgpt.autodiff import Tensor, constant
from tgpt.baselines import PointForecast
from tgpt.timeseries import Dataset, Frequency, TimeSeries

__all__ = [
    "ModelConfig", "WeightStore", "ForecastWindowBatch", "Mode",
    "CheckpointError", "default_config", "init_weights", "window_batch",
    "forward", "forward_tensors", "forward_infer", "predict_series",
    "predict_dataset", "save_weights", "load_weights", "CHECKPOINT_VERSION",
]

CHECKPOINT_MAGIC = b"TGPT"
CHECKPOINT_VERSION = 1

NEG_INF_MASK = -1e30  # additive attention mask for disallowed positions


class CheckpointError(ValueError):
    """Corrupt, truncated, or incompatible checkpoint file."""


class Mode(enum.Enum):
    TRAIN = "train"
    INFER = "infer"


@dataclass(frozen=True)
class ModelConfig:
    input_length: int
    max_horizon: int
    d_model: int
    n_heads: int
    n_encoder_layers: int
    n_decoder_layers: int
    ff_dim: int
    dropout: float
    n_exo_channels: int = 0

    def __post_init__(self):
        if self.input_length < 2:
            raise ValueError("input_length must be >= 2")
        if self.max_horizon < 1:
            raise ValueError("max_horizon must be >= 1")
        for name in ("d_model", "n_heads", "n_encoder_layers", "n_decoder_layers",
                     "ff_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.n_exo_channels < 0:
            raise ValueError("n_exo_channels must be non-negative")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True,
                          separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        data = json.loads(text)
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - fields
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        missing = {f.name for f in dataclasses.fields(cls)
                   if f.default is dataclasses.MISSING} - set(data)
        if missing:
            raise ValueError(f"missing model config keys: {sorted(missing)}")
        return cls(**data)


def default_config(freq: Frequency, n_exo_channels: int = 0,
                   dropout: float = 0.1) -> ModelConfig:
    """Toy-scale defaults: window of two seasons, per-frequency horizon."""
    span = max(freq.season_length, freq.default_horizon)
    return ModelConfig(
        input_length=2 * span,
        max_horizon=freq.default_horizon,
        d_model=64,
        n_heads=4,
        n_encoder_layers=2,
        n_decoder_layers=2,
        ff_dim=128,
        dropout=dropout,
        n_exo_channels=n_exo_channels,
    )


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

FIXED_PARAMS = frozenset({"pos_enc", "pos_dec"})  # sinusoidal tables, not learned


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, ff = config.d_model, config.ff_dim
    shapes: dict[str, tuple[int, ...]] = {
        "in_proj.w": (1 + config.n_exo_channels, d),
        "in_proj.b": (d,),
        "pos_enc": (config.input_length, d),
        "pos_dec": (config.max_horizon, d),
        "start_token": (d,),
    }
    if config.n_exo_channels:
        shapes["dec_exo_proj.w"] = (config.n_exo_channels, d)

    def block(prefix: str, cross: bool):
        shapes[f"{prefix}.self.wq"] = (d, d)
        shapes[f"{prefix}.self.wk"] = (d, d)
        shapes[f"{prefix}.self.wv"] = (d, d)
        shapes[f"{prefix}.self.wo"] = (d, d)
        shapes[f"{prefix}.ln1.g"] = (d,)
        shapes[f"{prefix}.ln1.b"] = (d,)
        if cross:
            shapes[f"{prefix}.cross.wq"] = (d, d)
            shapes[f"{prefix}.cross.wk"] = (d, d)
            shapes[f"{prefix}.cross.wv"] = (d, d)
            shapes[f"{prefix}.cross.wo"] = (d, d)
            shapes[f"{prefix}.ln2.g"] = (d,)
            shapes[f"{prefix}.ln2.b"] = (d,)
        shapes[f"{prefix}.ff.w1"] = (d, ff)
        shapes[f"{prefix}.ff.b1"] = (ff,)
        shapes[f"{prefix}.ff.w2"] = (ff, d)
        shapes[f"{prefix}.ff.b2"] = (d,)
        ln_out = "ln3" if cross else "ln2"
        shapes[f"{prefix}.{ln_out}.g"] = (d,)
        shapes[f"{prefix}.{ln_out}.b"] = (d,)

    for i in range(config.n_encoder_layers):
        block(f"enc{i}", cross=False)
    for i in range(config.n_decoder_layers):
        block(f"dec{i}", cross=True)
    shapes["head.w"] = (d, 1)
    shapes["head.b"] = (1,)
    return shapes


class WeightStore:
    """Named parameter arrays; the positional tables are fixed, the rest train."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.params = {k: np.ascontiguousarray(v, dtype=np.float64)
                       for k, v in params.items()}
        for name, arr in self.params.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name!r} has non-finite entries")

    def trainable_names(self) -> list[str]:
        return [n for n in self.params if n not in FIXED_PARAMS]

    def copy(self) -> "WeightStore":
        return WeightStore({k: v.copy() for k, v in self.params.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightStore):
            return NotImplemented
        return (set(self.params) == set(other.params)
                and all(np.array_equal(self.params[k], other.params[k])
                        for k in self.params))


def _sinusoidal_table(rows: int, d: int) -> np.ndarray:
    pos = np.arange(rows)[:, None].astype(np.float64)
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2.0 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def init_weights(config: ModelConfig, seed: int) -> WeightStore:
    """Deterministic initialization: Xavier-uniform linear maps, unit
    layer-norm gains, zero biases, fixed sinusoidal positional tables."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(config).items():
        if name == "pos_enc":
            params[name] = _sinusoidal_table(config.input_length, config.d_model)
        elif name == "pos_dec":
            params[name] = _sinusoidal_table(config.max_horizon, config.d_model)
        elif name.endswith(".g"):
            params[name] = np.ones(shape)
        elif name.endswith((".b", ".b1", ".b2")):
            params[name] = np.zeros(shape)
        elif name == "start_token":
            bound = math.sqrt(6.0 / (1 + config.d_model))
            params[name] = rng.uniform(-bound, bound, shape)
        else:
            fan_in, fan_out = shape[0], shape[1]
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-bound, bound, shape)
    return WeightStore(params)


# ---------------------------------------------------------------------------
# window batches
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForecastWindowBatch:
    """Raw history windows plus the per-window scales used to standardize them.

    history: (B, L, 1+n_exo) with the value channel first, exogenous channels
    in sorted-name order. future_exo: (B, h, n_exo) or None. scale: (B, 2)
    columns (mean, std) of the value channel; degenerate windows carry std=1.
    exo_scale: (B, n_exo, 2) per-channel window scales.
    """

    history: np.ndarray
    future_exo: np.ndarray | None
    scale: np.ndarray
    exo_scale: np.ndarray

    @property
    def size(self) -> int:
        return self.history.shape[0]


def _pad_left(window: np.ndarray, length: int) -> np.ndarray:
    if window.size == 0:
        raise ValueError("empty history window")
    if window.size >= length:
        return window[-length:]
    return np.concatenate([np.full(length - window.size, window[0]), window])


def window_batch(series_list, origins, config: ModelConfig,
                 horizon: int) -> ForecastWindowBatch:
    """Build the model input batch from per-series forecast origins.

    origin = number of history points available to the window; histories
    shorter than input_length are left-padded with their earliest value.
    Exogenous channels (sorted by name) must match config.n_exo_channels and,
    when present, cover `horizon` steps past each origin.
    """
    L, n_exo = config.input_length, config.n_exo_channels
    b = len(series_list)
    history = np.empty((b, L, 1 + n_exo))
    future = np.empty((b, horizon, n_exo)) if n_exo else None

    for i, (series, origin) in enumerate(zip(series_list, origins)):
        values = np.asarray(getattr(series, "values", series), dtype=np.float64)
        if not 1 <= origin <= values.size:
            raise ValueError(f"origin {origin} outside [1, {values.size}]")
        history[i, :, 0] = _pad_left(values[:origin], L)
        channels = getattr(series, "exogenous", {})
        names = sorted(channels)
        if len(names) != n_exo:
            raise ValueError(f"series has {len(names)} exogenous channels, "
                             f"model expects {n_exo}")
        for c, name in enumerate(names):
            chan = np.asarray(channels[name], dtype=np.float64)
            if chan.size < origin + horizon:
                raise ValueError(f"exogenous channel {name!r} does not cover "
                                 f"{horizon} steps past origin {origin}")
            history[i, :, 1 + c] = _pad_left(chan[:origin], L)
            future[i, :, c] = chan[origin:origin + horizon]

    means = history.mean(axis=1)
    stds = history.std(axis=1)
    stds[stds <= 1e-12] = 1.0
    scale = np.stack([means[:, 0], stds[:, 0]], axis=1)
    exo_scale = np.stack([means[:, 1:], stds[:, 1:]], axis=2)
    return ForecastWindowBatch(history=history, future_exo=future, scale=scale,
                               exo_scale=exo_scale)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def _dropout(x: Tensor, p: float, rng) -> Tensor:
    if rng is None or p <= 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return ad.mul(x, constant(mask))


def _attention(params, prefix: str, x: Tensor, memory: Tensor, n_heads: int,
               mask: np.ndarray | None) -> Tensor:
    d = x.shape[-1]
    dk = d // n_heads
    q = ad.matmul(x, params[f"{prefix}.wq"])
    k = ad.matmul(memory, params[f"{prefix}.wk"])
    v = ad.matmul(memory, params[f"{prefix}.wv"])
    scale = constant(1.0 / math.sqrt(dk))
    heads = []
    for i in range(n_heads):
        qh = ad.slice_axis(q, 2, i * dk, (i + 1) * dk)
        kh = ad.slice_axis(k, 2, i * dk, (i + 1) * dk)
        vh = ad.slice_axis(v, 2, i * dk, (i + 1) * dk)
        scores = ad.mul(ad.matmul(qh, ad.transpose(kh)), scale)
        if mask is not None:
            scores = ad.add(scores, constant(mask))
        heads.append(ad.matmul(ad.softmax(scores), vh))
    merged = heads[0] if n_heads == 1 else ad.concat(heads, axis=2)
    return ad.matmul(merged, params[f"{prefix}.wo"])


def _feed_forward(params, prefix: str, x: Tensor) -> Tensor:
    hidden = ad.gelu(ad.add(ad.matmul(x, params[f"{prefix}.w1"]),
                            params[f"{prefix}.b1"]))
    return ad.add(ad.matmul(hidden, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def _residual_norm(params, prefix: str, x: Tensor, branch: Tensor,
                   p: float, rng) -> Tensor:
    return ad.layer_norm(ad.add(x, _dropout(branch, p, rng)),
                         params[f"{prefix}.g"], params[f"{prefix}.b"])


def forward_tensors(params, config: ModelConfig, batch: ForecastWindowBatch,
                    horizon: int, train: bool = False, rng=None) -> Tensor:
    """Run the network on a batch; returns the (B, horizon) output on the
    normalized scale. `params` maps parameter names to Tensors (tape leaves
    during training, constants at inference)."""
    if not 1 <= horizon <= config.max_horizon:
        raise ValueError(f"horizon {horizon} exceeds max_horizon {config.max_horizon}")
    b, L, channels = batch.history.shape
    if L != config.input_length or channels != 1 + config.n_exo_channels:
        raise ValueError(f"batch history shape {batch.history.shape} does not match "
                         f"config (L={config.input_length}, "
                         f"channels={1 + config.n_exo_channels})")
    p = config.dropout if train else 0.0
    rng = rng if train else None
    norm, fut = _normalize_batch(config, batch, horizon)

    x = ad.add(ad.matmul(constant(norm), params["in_proj.w"]), params["in_proj.b"])
    x = ad.add(x, ad.slice_axis(params["pos_enc"], 0, 0, L))
    x = _dropout(x, p, rng)
    for i in range(config.n_encoder_layers):
        attn = _attention(params, f"enc{i}.self", x, x, config.n_heads, mask=None)
        x = _residual_norm(params, f"enc{i}.ln1", x, attn, p, rng)
        x = _residual_norm(params, f"enc{i}.ln2", x, _feed_forward(params, f"enc{i}.ff", x), p, rng)

    start = ad.add(constant(np.zeros((b, horizon, config.d_model))),
                   params["start_token"])
    y = ad.add(start, ad.slice_axis(params["pos_dec"], 0, 0, horizon))
    if config.n_exo_channels:
        y = ad.add(y, ad.matmul(constant(fut), params["dec_exo_proj.w"]))
    y = _dropout(y, p, rng)

    causal = np.triu(np.full((horizon, horizon), NEG_INF_MASK), k=1)
    for i in range(config.n_decoder_layers):
        attn = _attention(params, f"dec{i}.self", y, y, config.n_heads, mask=causal)
        y = _residual_norm(params, f"dec{i}.ln1", y, attn, p, rng)
        cross = _attention(params, f"dec{i}.cross", y, x, config.n_heads, mask=None)
        y = _residual_norm(params, f"dec{i}.ln2", y, cross, p, rng)
        y = _residual_norm(params, f"dec{i}.ln3", y, _feed_forward(params, f"dec{i}.ff", y), p, rng)

    out = ad.add(ad.matmul(y, params["head.w"]), params["head.b"])
    return ad.reshape(out, (b, horizon))


def _as_param_tensors(weights: WeightStore) -> dict[str, Tensor]:
    return {name: constant(arr) for name, arr in weights.params.items()}


def _normalize_batch(config: ModelConfig, batch: ForecastWindowBatch,
                     horizon: int) -> tuple[np.ndarray, np.ndarray | None]:
    mean = batch.scale[:, 0][:, None]
    std = batch.scale[:, 1][:, None]
    norm = np.empty_like(batch.history)
    norm[:, :, 0] = (batch.history[:, :, 0] - mean) / std
    fut = None
    if config.n_exo_channels:
        if batch.future_exo is None:
            raise ValueError("model uses exogenous channels but batch has no "
                             "future covariates")
        fut = np.empty_like(batch.future_exo)
        for c in range(config.n_exo_channels):
            m = batch.exo_scale[:, c, 0][:, None]
            s = batch.exo_scale[:, c, 1][:, None]
            norm[:, :, 1 + c] = (batch.history[:, :, 1 + c] - m) / s
            fut[:, :, c] = (batch.future_exo[:, :, c] - m) / s
    return norm, fut


def _np_attention(p, prefix: str, x: np.ndarray, memory: np.ndarray,
                  n_heads: int, mask: np.ndarray | None) -> np.ndarray:
    """Inference-only multi-head attention; heads folded into the batch axis."""
    b, t, d = x.shape
    s = memory.shape[1]
    dk = d // n_heads
    q = (x.reshape(-1, d) @ p[f"{prefix}.wq"]).reshape(b, t, n_heads, dk)
    k = (memory.reshape(-1, d) @ p[f"{prefix}.wk"]).reshape(b, s, n_heads, dk)
    v = (memory.reshape(-1, d) @ p[f"{prefix}.wv"]).reshape(b, s, n_heads, dk)
    q = q.swapaxes(1, 2).reshape(b * n_heads, t, dk)
    k = k.swapaxes(1, 2).reshape(b * n_heads, s, dk)
    v = v.swapaxes(1, 2).reshape(b * n_heads, s, dk)
    scores = q @ k.swapaxes(-1, -2)
    scores *= 1.0 / math.sqrt(dk)
    if mask is not None:
        scores += mask
    scores -= scores.max(axis=-1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=-1, keepdims=True)
    out = (scores @ v).reshape(b, n_heads, t, dk).swapaxes(1, 2).reshape(b * t, d)
    return (out @ p[f"{prefix}.wo"]).reshape(b, t, d)


def _np_layer_norm(p, prefix: str, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * p[f"{prefix}.g"] + p[f"{prefix}.b"]


def _np_feed_forward(p, prefix: str, x: np.ndarray) -> np.ndarray:
    b, t, d = x.shape
    h = x.reshape(-1, d) @ p[f"{prefix}.w1"] + p[f"{prefix}.b1"]
    h2 = h * h
    h = 0.5 * h * (1.0 + np.tanh(ad.GELU_C * (h + ad.GELU_A * (h2 * h))))
    return (h @ p[f"{prefix}.w2"] + p[f"{prefix}.b2"]).reshape(b, t, d)


def forward_infer(weights: WeightStore, config: ModelConfig,
                  batch: ForecastWindowBatch, horizon: int) -> np.ndarray:
    """Tape-free inference pass; same math as forward_tensors without dropout.

    Verified against the taped path by the test suite; raises on a non-finite
    forecast instead of per-op checks.
    """
    if not 1 <= horizon <= config.max_horizon:
        raise ValueError(f"horizon {horizon} exceeds max_horizon {config.max_horizon}")
    b, L, channels = batch.history.shape
    if L != config.input_length or channels != 1 + config.n_exo_channels:
        raise ValueError(f"batch history shape {batch.history.shape} does not match "
                         f"config (L={config.input_length}, "
                         f"channels={1 + config.n_exo_channels})")
    p = weights.params
    norm, fut = _normalize_batch(config, batch, horizon)

    x = (norm.reshape(-1, channels) @ p["in_proj.w"] + p["in_proj.b"]).reshape(
        b, L, config.d_model)
    x += p["pos_enc"][:L]
    for i in range(config.n_encoder_layers):
        x = _np_layer_norm(p, f"enc{i}.ln1",
                           x + _np_attention(p, f"enc{i}.self", x, x,
                                             config.n_heads, None))
        x = _np_layer_norm(p, f"enc{i}.ln2", x + _np_feed_forward(p, f"enc{i}.ff", x))

    y = np.broadcast_to(p["start_token"] + p["pos_dec"][:horizon],
                        (b, horizon, config.d_model)).copy()
    if config.n_exo_channels:
        y += (fut.reshape(-1, config.n_exo_channels) @ p["dec_exo_proj.w"]).reshape(
            b, horizon, config.d_model)
    causal = np.triu(np.full((horizon, horizon), NEG_INF_MASK), k=1)
    for i in range(config.n_decoder_layers):
        y = _np_layer_norm(p, f"dec{i}.ln1",
                           y + _np_attention(p, f"dec{i}.self", y, y,
                                             config.n_heads, causal))
        y = _np_layer_norm(p, f"dec{i}.ln2",
                           y + _np_attention(p, f"dec{i}.cross", y, x,
                                             config.n_heads, None))
        y = _np_layer_norm(p, f"dec{i}.ln3", y + _np_feed_forward(p, f"dec{i}.ff", y))

    out = (y.reshape(-1, config.d_model) @ p["head.w"] + p["head.b"]).reshape(b, horizon)
    if not np.all(np.isfinite(out)):
        raise ArithmeticError("forecast pass produced non-finite values")
    return out


def forward(weights: WeightStore, config: ModelConfig, batch: ForecastWindowBatch,
            horizon: int, mode: Mode = Mode.INFER, seed: int = 0) -> np.ndarray:
    """De-normalized (B, horizon) forecast. Train mode applies seeded dropout
    through the taped ops; Infer mode runs the deterministic fast path."""
    if mode is Mode.TRAIN:
        rng = np.random.default_rng(seed)
        out = forward_tensors(_as_param_tensors(weights), config, batch, horizon,
                              train=True, rng=rng).data
    else:
        out = forward_infer(weights, config, batch, horizon)
    return out * batch.scale[:, 1][:, None] + batch.scale[:, 0][:, None]


def predict_series(weights: WeightStore, config: ModelConfig, series: TimeSeries,
                   horizon: int) -> PointForecast:
    """Zero-shot forecast from the final window of one series."""
    batch = window_batch([series], [len(series)], config, horizon)
    out = forward(weights, config, batch, horizon)
    return PointForecast(series.id, horizon, out[0])


def predict_dataset(weights: WeightStore, config: ModelConfig, ds: Dataset,
                    horizon: int, chunk_size: int = 256) -> dict[str, PointForecast]:
    """Batched zero-shot forecasts for every series in a dataset."""
    out: dict[str, PointForecast] = {}
    series = list(ds.series)
    for lo in range(0, len(series), chunk_size):
        part = series[lo:lo + chunk_size]
        batch = window_batch(part, [len(s) for s in part], config, horizon)
        values = forward(weights, config, batch, horizon)
        for s, v in zip(part, values):
            out[s.id] = PointForecast(s.id, horizon, v)
    return out


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_weights(weights: WeightStore, config: ModelConfig, path) -> None:
    cfg_bytes = config.to_json().encode("utf-8")
    parts = [struct.pack("<I", len(cfg_bytes)), cfg_bytes]
    for name, arr in weights.params.items():
        name_b = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f8").tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_weights(path) -> tuple[WeightStore, ModelConfig]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise CheckpointError("truncated checkpoint file")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic bytes: not a checkpoint file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version} "
                              f"(expected {CHECKPOINT_VERSION})")
    payload = blob[8:-4]
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(payload) != crc:
        raise CheckpointError("checksum mismatch: checkpoint is corrupt")

    view = memoryview(payload)
    offset = 0

    def take(n: int) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise CheckpointError("truncated checkpoint record")
        chunk = view[offset:offset + n]
        offset += n
        return chunk

    (cfg_len,) = struct.unpack("<I", take(4))
    try:
        config = ModelConfig.from_json(bytes(take(cfg_len)).decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"invalid config block: {exc}") from None

    params: dict[str, np.ndarray] = {}
    while offset < len(view):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = bytes(take(name_len)).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError("invalid parameter name encoding") from None
        (rank,) = struct.unpack("<I", take(4))
        if rank > 8:
            raise CheckpointError(f"implausible parameter rank {rank}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = math.prod(dims)
        data = np.frombuffer(take(8 * count), dtype="<f8").reshape(dims)
        if name in params:
            raise CheckpointError(f"duplicate parameter {name!r}")
        params[name] = np.ascontiguousarray(data)

    expected = parameter_shapes(config)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise CheckpointError(f"parameter set mismatch (missing={missing}, "
                              f"extra={extra})")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise CheckpointError(f"parameter {name!r} has shape "
                                  f"{params[name].shape}, config requires {shape}")
    try:
        store = WeightStore(params)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None
    return store, config
