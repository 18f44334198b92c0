"""Pretraining and fine-tuning loops.

One loop owns a private copy of the weights: sample a window batch, run the
network in train mode, take the mean absolute error on the normalized scale,
backpropagate, and apply Adam with a linear learning-rate decay that ends at
lr_final_fraction of the initial rate. Everything is deterministic given the
config seed; per-step rng streams are split by a (seed, stream, step) counter
so batch assembly and dropout never interleave draws.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

import tgpt.autodiff as ad
from tgpt.autodiff import Tape, backward, constant
from tgpt.model import (
    FIXED_PARAMS,
    ForecastWindowBatch,
    ModelConfig,
    WeightStore,
    forward_tensors,
    init_weights,
    predict_dataset,
    window_batch,
)
from tgpt.timeseries import Dataset, last_window_split

__all__ = [
    "TrainConfig", "LossTrace", "AdamState", "learning_rate", "sample_batch",
    "adam_step", "pretrain", "finetune",
]


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    batch_size: int
    lr0: float
    lr_final_fraction: float = 0.12
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    loss: str = "mae"

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr0 < 0:
            raise ValueError("lr0 must be non-negative")
        if not 0.0 < self.lr_final_fraction <= 1.0:
            raise ValueError("lr_final_fraction must lie in (0, 1]")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be positive")
        if self.loss != "mae":
            raise ValueError(f"unsupported loss {self.loss!r}; only 'mae'")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True,
                          separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        data = json.loads(text)
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - fields
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        missing = {f.name for f in dataclasses.fields(cls)
                   if f.default is dataclasses.MISSING} - set(data)
        if missing:
            raise ValueError(f"missing train config keys: {sorted(missing)}")
        return cls(**data)


@dataclass
class LossTrace:
    losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.losses)


def learning_rate(step: int, cfg: TrainConfig) -> float:
    """Linear decay from lr0 at step 0 to lr_final_fraction*lr0 at the final
    step (step indices run 0..steps-1)."""
    if cfg.steps <= 1:
        return cfg.lr0
    frac = step / (cfg.steps - 1)
    return cfg.lr0 * (1.0 - (1.0 - cfg.lr_final_fraction) * frac)


def _step_rng(seed: int, stream: int, step: int) -> np.random.Generator:
    entropy = [seed & 0xFFFF_FFFF_FFFF_FFFF, stream, step]
    return np.random.default_rng(np.random.SeedSequence(entropy))


# ---------------------------------------------------------------------------
# batch sampling
# ---------------------------------------------------------------------------

def sample_batch(ds: Dataset, config: ModelConfig, horizon: int, batch_size: int,
                 rng: np.random.Generator) -> tuple[ForecastWindowBatch, np.ndarray]:
    """Uniformly sample (series, forecast origin) pairs and build the window
    batch plus the (B, horizon) target block. Origins leave at least one
    history point and `horizon` future points."""
    usable = [s for s in ds.series if len(s) >= horizon + 1]
    if not usable:
        raise ValueError(f"dataset has no series of length >= {horizon + 1}")
    picks, origins = [], []
    for _ in range(batch_size):
        s = usable[int(rng.integers(0, len(usable)))]
        origin = int(rng.integers(1, len(s) - horizon + 1))
        picks.append(s)
        origins.append(origin)
    batch = window_batch(picks, origins, config, horizon)
    targets = np.stack([s.values[o:o + horizon] for s, o in zip(picks, origins)])
    return batch, targets


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, weights: WeightStore) -> "AdamState":
        return cls(m={n: np.zeros_like(weights[n]) for n in weights.trainable_names()},
                   v={n: np.zeros_like(weights[n]) for n in weights.trainable_names()})


def adam_step(weights: WeightStore, grads: dict[str, np.ndarray], state: AdamState,
              step_index: int, cfg: TrainConfig) -> tuple[WeightStore, AdamState]:
    """One bias-corrected Adam update, in place on weights and state."""
    trainable = set(weights.trainable_names())
    if set(grads) != trainable:
        raise ValueError(f"gradients must cover exactly the trainable parameters; "
                         f"missing={sorted(trainable - set(grads))}, "
                         f"extra={sorted(set(grads) - trainable)}")
    lr = learning_rate(step_index, cfg)
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    t = step_index + 1
    for name in weights.trainable_names():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise ArithmeticError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        mhat = m / (1.0 - b1 ** t)
        vhat = v / (1.0 - b2 ** t)
        weights.params[name] -= lr * mhat / (np.sqrt(vhat) + eps)
    return weights, state


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

def _train_step(weights: WeightStore, model_cfg: ModelConfig, train_cfg: TrainConfig,
                ds: Dataset, state: AdamState, step: int) -> float:
    batch, targets = sample_batch(ds, model_cfg, model_cfg.max_horizon,
                                  train_cfg.batch_size, _step_rng(train_cfg.seed, 0, step))
    tape = Tape()
    params = {name: (constant(arr) if name in FIXED_PARAMS else tape.leaf(arr))
              for name, arr in weights.params.items()}
    out = forward_tensors(params, model_cfg, batch, model_cfg.max_horizon,
                          train=True, rng=_step_rng(train_cfg.seed, 1, step))
    t_norm = (targets - batch.scale[:, 0][:, None]) / batch.scale[:, 1][:, None]
    loss = ad.reduce_mean(ad.absolute(ad.sub(out, constant(t_norm))))
    grads_by_node = backward(loss)
    grads = {name: grads_by_node.get(p.node_id, np.zeros_like(weights[name]))
             for name, p in params.items() if name not in FIXED_PARAMS}
    adam_step(weights, grads, state, step, train_cfg)
    return float(loss.data)


def _run_loop(weights: WeightStore, model_cfg: ModelConfig, train_cfg: TrainConfig,
              ds: Dataset, on_step=None) -> LossTrace:
    state = AdamState.zeros_like(weights)
    trace = LossTrace()
    for step in range(train_cfg.steps):
        if on_step is not None:
            on_step(step, weights)
        loss = _train_step(weights, model_cfg, train_cfg, ds, state, step)
        trace.losses.append(loss)
        trace.learning_rates.append(learning_rate(step, train_cfg))
    if on_step is not None:
        on_step(train_cfg.steps, weights)
    return trace


def pretrain(ds_source: Dataset, model_cfg: ModelConfig,
             train_cfg: TrainConfig) -> tuple[WeightStore, LossTrace]:
    """Train fresh weights on a source dataset."""
    if not ds_source.series:
        raise ValueError("source dataset is empty")
    weights = init_weights(model_cfg, train_cfg.seed)
    trace = _run_loop(weights, model_cfg, train_cfg, ds_source)
    return weights, trace


def zero_shot_rmae(weights: WeightStore, model_cfg: ModelConfig, ds: Dataset,
                   horizon: int, season_length: int | None = None) -> float:
    """rMAE of zero-shot forecasts on the last window, seasonal-naive base."""
    from tgpt.baselines import seasonal_naive
    from tgpt.evaluation import rmae

    s = season_length if season_length is not None else ds.freq.season_length
    train, test = last_window_split(ds, horizon)
    forecasts = predict_dataset(weights, model_cfg, train, horizon)
    actuals = np.stack([t.values for t in test.series])
    model_fc = np.stack([forecasts[t.id].values for t in test.series])
    base_fc = np.stack([seasonal_naive(train.get(t.id), horizon, s).values
                        for t in test.series])
    return rmae(actuals, model_fc, base_fc)


def finetune(weights: WeightStore, model_cfg: ModelConfig, ds_target: Dataset,
             train_cfg: TrainConfig, eval_dataset: Dataset | None = None,
             eval_at: tuple[int, ...] = (), eval_horizon: int | None = None,
             ) -> tuple[WeightStore, LossTrace, list[tuple[int, float]]]:
    """Continue training from pretrained weights on a target dataset.

    When an eval dataset is given, records (step, zero-shot rMAE) at the
    requested step counts; step 0 is the untouched pretrained model.
    """
    if not ds_target.series:
        raise ValueError("target dataset is empty")
    tuned = weights.copy()
    curve: list[tuple[int, float]] = []
    marks = sorted(set(eval_at))

    def on_step(step: int, current: WeightStore):
        if eval_dataset is not None and step in marks:
            h = eval_horizon or eval_dataset.freq.default_horizon
            curve.append((step, zero_shot_rmae(current, model_cfg, eval_dataset, h)))

    trace = _run_loop(tuned, model_cfg, train_cfg, ds_target,
                      on_step=on_step if eval_dataset is not None else None)
    return tuned, trace, curve
