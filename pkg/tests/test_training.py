from datetime import datetime

import numpy as np
import pytest

from tgpt.model import ModelConfig, WeightStore, init_weights, predict_series
from tgpt.timeseries import Dataset, Frequency, Role, TimeSeries
from tgpt.training import (
    AdamState,
    TrainConfig,
    adam_step,
    finetune,
    learning_rate,
    pretrain,
    sample_batch,
)

TINY = ModelConfig(input_length=8, max_horizon=3, d_model=8, n_heads=2,
                   n_encoder_layers=1, n_decoder_layers=1, ff_dim=16, dropout=0.1)


def make_dataset(n_series=8, length=20, kind="constant", seed=0):
    rng = np.random.default_rng(seed)
    series = []
    for i in range(n_series):
        if kind == "constant":
            vals = np.full(length, float(rng.uniform(1, 100)))
        else:
            vals = rng.normal(10, 2, length)
        series.append(TimeSeries(f"s{i}", datetime(2020, 1, 1), Frequency.MONTHLY, vals))
    return Dataset(Frequency.MONTHLY, tuple(series), role=Role.SOURCE)


class TestTrainConfig:
    def test_json_roundtrip(self):
        cfg = TrainConfig(steps=10, batch_size=4, lr0=1e-3, seed=7)
        assert TrainConfig.from_json(cfg.to_json()) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            TrainConfig.from_json('{"steps":1,"batch_size":1,"lr0":0.1,"bogus":2}')

    def test_missing_key_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            TrainConfig.from_json('{"steps":1}')

    def test_loss_enum(self):
        with pytest.raises(ValueError, match="loss"):
            TrainConfig(steps=1, batch_size=1, lr0=0.1, loss="mse")


class TestLearningRate:
    def test_endpoints(self):
        cfg = TrainConfig(steps=100, batch_size=1, lr0=2e-3)
        assert learning_rate(0, cfg) == 2e-3
        assert abs(learning_rate(99, cfg) - 0.12 * 2e-3) < 1e-12 * 2e-3

    def test_monotone_non_increasing(self):
        cfg = TrainConfig(steps=57, batch_size=1, lr0=1.0, lr_final_fraction=0.12)
        lrs = [learning_rate(s, cfg) for s in range(cfg.steps)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))
        assert min(lrs) == lrs[-1]
        assert abs(lrs[-1] - 0.12) < 1e-12

    def test_single_step(self):
        cfg = TrainConfig(steps=1, batch_size=1, lr0=0.5)
        assert learning_rate(0, cfg) == 0.5


class TestAdam:
    def scalar_store(self, value=1.0):
        return WeightStore({"w": np.array([value])})

    def test_matches_scalar_oracle(self):
        cfg = TrainConfig(steps=100, batch_size=1, lr0=0.01, lr_final_fraction=0.12,
                          adam_beta1=0.9, adam_beta2=0.999, adam_eps=1e-8)
        store = self.scalar_store(1.0)
        state = AdamState.zeros_like(store)
        g = 0.3
        for step in range(100):
            adam_step(store, {"w": np.array([g])}, state, step, cfg)

        # hand-rolled recursion
        w, m, v = 1.0, 0.0, 0.0
        for step in range(100):
            lr = 0.01 * (1 - (1 - 0.12) * step / 99)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            mhat = m / (1 - 0.9 ** (step + 1))
            vhat = v / (1 - 0.999 ** (step + 1))
            w -= lr * mhat / (np.sqrt(vhat) + 1e-8)
        assert abs(store["w"][0] - w) < 1e-12

    def test_zero_gradient_no_change(self):
        cfg = TrainConfig(steps=5, batch_size=1, lr0=0.1)
        store = self.scalar_store(3.0)
        state = AdamState.zeros_like(store)
        adam_step(store, {"w": np.zeros(1)}, state, 0, cfg)
        assert store["w"][0] == 3.0

    def test_nan_gradient_names_parameter(self):
        cfg = TrainConfig(steps=5, batch_size=1, lr0=0.1)
        store = self.scalar_store()
        state = AdamState.zeros_like(store)
        with pytest.raises(ArithmeticError, match="'w'"):
            adam_step(store, {"w": np.array([np.nan])}, state, 0, cfg)

    def test_gradient_name_mismatch(self):
        cfg = TrainConfig(steps=5, batch_size=1, lr0=0.1)
        store = self.scalar_store()
        state = AdamState.zeros_like(store)
        with pytest.raises(ValueError, match="exactly"):
            adam_step(store, {"other": np.zeros(1)}, state, 0, cfg)


class TestSampleBatch:
    def test_shapes(self):
        ds = make_dataset(kind="noise")
        rng = np.random.default_rng(0)
        batch, targets = sample_batch(ds, TINY, 3, 4, rng)
        assert batch.history.shape == (4, 8, 1)
        assert targets.shape == (4, 3)

    def test_deterministic(self):
        ds = make_dataset(kind="noise")
        a, ta = sample_batch(ds, TINY, 3, 4, np.random.default_rng(9))
        b, tb = sample_batch(ds, TINY, 3, 4, np.random.default_rng(9))
        assert np.array_equal(a.history, b.history)
        assert np.array_equal(ta, tb)

    def test_single_valid_origin(self):
        s = TimeSeries("one", datetime(2020, 1, 1), Frequency.MONTHLY,
                       np.arange(1.0, 5.0))  # length h+1 = 4 for h=3
        ds = Dataset(Frequency.MONTHLY, (s,))
        batch, targets = sample_batch(ds, TINY, 3, 6, np.random.default_rng(1))
        np.testing.assert_array_equal(targets, np.tile([2.0, 3.0, 4.0], (6, 1)))

    def test_no_usable_series(self):
        s = TimeSeries("short", datetime(2020, 1, 1), Frequency.MONTHLY, np.ones(3))
        ds = Dataset(Frequency.MONTHLY, (s,))
        with pytest.raises(ValueError, match="no series"):
            sample_batch(ds, TINY, 3, 2, np.random.default_rng(0))


class TestPretrain:
    def test_zero_steps(self):
        ds = make_dataset()
        cfg = TrainConfig(steps=0, batch_size=4, lr0=1e-3, seed=3)
        weights, trace = pretrain(ds, TINY, cfg)
        assert len(trace) == 0
        assert weights == init_weights(TINY, seed=3)

    def test_deterministic(self):
        ds = make_dataset(kind="noise")
        cfg = TrainConfig(steps=5, batch_size=4, lr0=1e-3, seed=11)
        w1, t1 = pretrain(ds, TINY, cfg)
        w2, t2 = pretrain(ds, TINY, cfg)
        assert w1 == w2
        assert t1.losses == t2.losses

    def test_loss_decreases_on_overfit_fixture(self):
        ds = make_dataset(n_series=4, kind="constant")
        tiny = ModelConfig(input_length=8, max_horizon=3, d_model=8, n_heads=2,
                           n_encoder_layers=1, n_decoder_layers=1, ff_dim=16,
                           dropout=0.0)
        # lr small enough for monotone descent under bias-corrected Adam
        cfg = TrainConfig(steps=11, batch_size=8, lr0=5e-4, seed=0)
        _, trace = pretrain(ds, tiny, cfg)
        decreases = sum(b < a for a, b in zip(trace.losses, trace.losses[1:]))
        assert decreases >= 8

    def test_constants_learnable(self):
        ds = make_dataset(n_series=32, kind="constant")
        tiny = ModelConfig(input_length=8, max_horizon=3, d_model=8, n_heads=2,
                           n_encoder_layers=1, n_decoder_layers=1, ff_dim=16,
                           dropout=0.0)
        cfg = TrainConfig(steps=120, batch_size=16, lr0=3e-3, seed=0)
        _, trace = pretrain(ds, tiny, cfg)
        assert trace.losses[-1] < 0.05

    def test_converged_constant_model_predicts_constants(self):
        ds = make_dataset(n_series=32, kind="constant")
        tiny = ModelConfig(input_length=8, max_horizon=3, d_model=8, n_heads=2,
                           n_encoder_layers=1, n_decoder_layers=1, ff_dim=16,
                           dropout=0.0)
        weights, _ = pretrain(ds, tiny, TrainConfig(steps=150, batch_size=16,
                                                    lr0=3e-3, seed=0))
        for c in (0.5, -40.0, 7.3):
            s = TimeSeries("c", datetime(2020, 1, 1), Frequency.MONTHLY,
                           np.full(12, c))
            fc = predict_series(weights, tiny, s, 3)
            assert np.all(np.abs(fc.values - c) <= 0.01 * abs(c) + 0.01), fc.values

    def test_trace_records_lr_schedule(self):
        ds = make_dataset()
        cfg = TrainConfig(steps=8, batch_size=2, lr0=1e-3, seed=0)
        _, trace = pretrain(ds, TINY, cfg)
        assert len(trace.learning_rates) == 8
        assert trace.learning_rates[0] == 1e-3
        assert abs(trace.learning_rates[-1] - 0.12e-3) < 1e-15


class TestFinetune:
    def test_zero_steps_keeps_forecasts(self):
        ds = make_dataset(kind="noise")
        weights = init_weights(TINY, seed=4)
        cfg = TrainConfig(steps=0, batch_size=4, lr0=1e-3, seed=5)
        tuned, trace, curve = finetune(weights, TINY, ds, cfg)
        s = ds.series[0]
        np.testing.assert_array_equal(predict_series(tuned, TINY, s, 3).values,
                                      predict_series(weights, TINY, s, 3).values)

    def test_zero_lr_keeps_weights(self):
        ds = make_dataset(kind="noise")
        weights = init_weights(TINY, seed=4)
        cfg = TrainConfig(steps=4, batch_size=4, lr0=0.0, seed=5)
        tuned, _, _ = finetune(weights, TINY, ds, cfg)
        assert tuned == weights

    def test_does_not_mutate_input_weights(self):
        ds = make_dataset(kind="noise")
        weights = init_weights(TINY, seed=4)
        before = weights.copy()
        cfg = TrainConfig(steps=3, batch_size=4, lr0=1e-3, seed=5)
        tuned, _, _ = finetune(weights, TINY, ds, cfg)
        assert weights == before
        assert tuned != before

    def test_eval_curve_step_zero_is_zero_shot(self):
        ds = make_dataset(n_series=6, length=30, kind="noise")
        weights = init_weights(TINY, seed=4)
        cfg = TrainConfig(steps=2, batch_size=4, lr0=1e-4, seed=5)
        from tgpt.training import zero_shot_rmae
        expected = zero_shot_rmae(weights, TINY, ds, 3)
        _, _, curve = finetune(weights, TINY, ds, cfg, eval_dataset=ds,
                               eval_at=(0, 2), eval_horizon=3)
        assert [s for s, _ in curve] == [0, 2]
        assert curve[0][1] == expected
