"""Tests for the MFIN network, its Sharpe-ratio loss and the training loop"""

from dataclasses import replace

import numpy as np
import pytest

from core.exceptions import ConfigurationError, NonFiniteLossError, ShapeError, WindowError
from services.autodiff import Tensor
from services.autodiff.gradcheck import gradcheck
from services.ingest import span_inputs
from services.metrics import sharpe
from services.mfin.complexity import param_count
from services.mfin.loss import (
    DEGENERATE_PENALTY,
    batch_loss,
    benchmark_returns,
    chunk_returns,
    sharpe_loss,
)
from services.mfin.model import MFIN, TrainedEnsemble, rolling_predict
from services.mfin.training import (
    EarlyStopping,
    contiguous_chunks,
    split_train_valid,
    train,
    train_ensemble,
    validation_loss,
)
from tests.factories import make_panel, random_walk_panel, tiny_mfin


@pytest.fixture
def model():
    return MFIN(tiny_mfin(), n_assets=3, n_inputs=4, seed=0)


@pytest.fixture
def inputs():
    panel = random_walk_panel(n_days=300)
    return span_inputs(panel, panel.dates[0], panel.dates[-1])


def planted_signal_panel(n_days=600, seed=0):
    """The signal's return dated s sets the sign of the price return dated s + 2"""
    rng = np.random.default_rng(seed)
    signal = rng.normal(0.0, 0.02, n_days)
    price = rng.normal(0.0, 0.005, n_days)
    price[2:] += 0.01 * np.sign(signal[:-2])
    signal[0] = price[0] = 0.0
    levels = np.empty((n_days, 1, 2))
    levels[:, 0, 0] = 100.0 * np.cumprod(1.0 + price)
    levels[:, 0, 1] = 100.0 * np.cumprod(1.0 + signal)
    return make_panel(levels, ("AAA",), ("open", "signal"))


class TestModel:
    def test_output_shape_and_range(self, model, rng):
        weights = model(rng.normal(size=(20, 3, 4)))
        assert weights.shape == (20, 3)
        assert np.all(np.abs(weights.data) < 1.0)

    def test_batched_matches_single(self, model, rng):
        X = rng.normal(size=(2, 20, 3, 4))
        batched = model.predict(X)
        for b in range(2):
            np.testing.assert_allclose(batched[b], model.predict(X[b]), atol=1e-12)

    def test_causal(self, model, rng):
        """Weights at row t do not depend on inputs after t"""
        X = rng.normal(size=(20, 3, 4))
        before = model.predict(X)
        X[12:] += 5.0
        after = model.predict(X)
        np.testing.assert_allclose(before[:12], after[:12], atol=1e-12)

    def test_shape_checks(self, model, rng):
        with pytest.raises(ShapeError):
            model(rng.normal(size=(20, 2, 4)))

    def test_filter_longer_than_window(self):
        config = tiny_mfin().model_copy(update={"ts_filter_length": 30})
        with pytest.raises(ConfigurationError):
            MFIN(config, 1, 4)

    def test_param_count_matches_closed_form(self, model):
        assert model.param_count() == param_count(tiny_mfin(), 3, 4).total

    def test_seeded_initialisation(self):
        a, b = MFIN(tiny_mfin(), 2, 3, seed=5), MFIN(tiny_mfin(), 2, 3, seed=5)
        for name, values in a.state_dict().items():
            np.testing.assert_array_equal(values, b.state_dict()[name])

    def test_rolling_predict(self, model, rng):
        """Each row is the last output over the window ending at it"""
        X = rng.normal(size=(30, 3, 4))
        out = rolling_predict(model, X, first=25, window=20)
        assert out.shape == (5, 3)
        np.testing.assert_allclose(out[-1], model.predict(X[10:30])[-1], atol=1e-12)
        with pytest.raises(WindowError):
            rolling_predict(model, X, first=30, window=20)

    def test_loss_gradients(self, rng):
        """Back-propagated loss gradients agree with central differences"""
        config = tiny_mfin(cost_bps=5.0, correlation_penalty=1.0)
        model = MFIN(config, n_assets=3, n_inputs=4, seed=1)
        X = rng.normal(size=(20, 3, 4))
        Y2 = rng.uniform(2.0, 6.0, size=(20, 3))
        Y1 = rng.normal(0.0, 0.02, size=(20, 3)) * Y2
        fn = lambda: sharpe_loss(model(X), Y1, Y2, config.cost_bps, config.correlation_penalty).loss
        errors = gradcheck(fn, model.parameters())
        assert max(errors.values()) < 1e-4


class TestLoss:
    def test_first_row_carries_no_cost(self):
        weights = Tensor(np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]]))
        returns = chunk_returns(weights, np.zeros((3, 2)), np.ones((3, 2)), cost_bps=10.0)
        np.testing.assert_allclose(returns.data, [0.0, -0.001, 0.0])

    def test_degenerate_returns(self):
        """A flat return stream scores the fixed penalty without a gradient"""
        weights = Tensor(np.ones((10, 2)), requires_grad=True)
        result = sharpe_loss(weights, np.zeros((10, 2)), np.ones((10, 2)))
        assert result.degenerate
        assert result.item() == DEGENERATE_PENALTY

    def test_negative_sharpe(self, rng):
        Y1 = rng.normal(0.001, 0.01, size=(50, 2))
        result = sharpe_loss(Tensor(np.full((50, 2), 0.5)), Y1, np.ones((50, 2)))
        returns = 0.5 * Y1.mean(axis=1)
        assert result.item() == pytest.approx(-np.sqrt(252) * returns.mean() / returns.std(ddof=1))

    def test_correlation_penalty(self, rng):
        """K adds K |rho| with the long-only benchmark"""
        Y1 = rng.normal(0.0, 0.01, size=(50, 2))
        Y2 = np.ones((50, 2))
        weights = Tensor(rng.uniform(-1, 1, size=(50, 2)))
        plain = sharpe_loss(weights, Y1, Y2)
        penalised = sharpe_loss(weights, Y1, Y2, correlation_penalty=2.0)
        assert penalised.item() - plain.item() == pytest.approx(2.0 * abs(plain.correlation))

    def test_benchmark_is_long_only(self, rng):
        Y1 = rng.normal(size=(5, 3))
        np.testing.assert_allclose(benchmark_returns(Y1, np.ones((5, 3)), 0.0), Y1.mean(axis=1))

    def test_batch_prices_each_chunk(self, rng):
        """Chunks are priced separately and pooled into one Sharpe ratio"""
        Y1 = [rng.normal(0, 0.01, size=(10, 2)) for _ in range(2)]
        Y2 = [np.ones((10, 2)) for _ in range(2)]
        weights = [Tensor(rng.uniform(-1, 1, size=(10, 2))) for _ in range(2)]
        result = batch_loss(weights, Y1, Y2, cost_bps=5.0)
        pooled = np.concatenate([chunk_returns(w, y1, y2, 5.0).data for w, y1, y2 in zip(weights, Y1, Y2)])
        assert result.sharpe == pytest.approx(np.sqrt(252) * pooled.mean() / pooled.std(ddof=1))


class TestTrainingHelpers:
    def test_split(self):
        assert split_train_valid(100, 0.9) == (90, 10)
        assert split_train_valid(455, 0.9) == (409, 46)

    def test_split_too_short(self):
        with pytest.raises(WindowError):
            split_train_valid(10, 0.9)

    def test_chunks(self):
        assert contiguous_chunks(45, 20) == [(0, 20), (20, 40), (40, 45)]

    def test_single_row_remainder_dropped(self):
        assert contiguous_chunks(41, 20) == [(0, 20), (20, 40)]

    def test_early_stopping(self):
        stopper = EarlyStopping(patience=2)
        assert stopper.update(1.0, 0)
        assert not stopper.update(1.5, 1)
        assert stopper.update(0.9, 2)
        stopper.update(1.0, 3)
        assert not stopper.should_stop
        stopper.update(1.0, 4)
        assert stopper.should_stop
        assert (stopper.best, stopper.best_epoch) == (0.9, 2)


class TestTraining:
    def test_history(self, inputs):
        result = train(tiny_mfin(), inputs, seed=0)
        assert 1 <= result.epochs_run <= 3
        assert set(result.history[0]) == {"epoch", "train_loss", "valid_loss", "lr"}
        assert result.best_valid_loss == min(h["valid_loss"] for h in result.history)

    def test_deterministic(self, inputs):
        """Same seed and data give identical parameters"""
        a, b = train(tiny_mfin(), inputs, seed=3), train(tiny_mfin(), inputs, seed=3)
        for name, values in a.model.state_dict().items():
            np.testing.assert_array_equal(values, b.model.state_dict()[name])

    def test_best_state_restored(self, inputs):
        config = tiny_mfin(max_epochs=4)
        result = train(config, inputs, seed=1)
        n_train, _ = split_train_valid(len(inputs), config.train_valid_split)
        assert validation_loss(result.model, inputs, n_train, config).item() == pytest.approx(result.best_valid_loss)

    def test_non_finite_loss(self, inputs):
        Y1 = inputs.Y1.copy()
        Y1[5] = np.nan
        with pytest.raises(NonFiniteLossError):
            train(tiny_mfin(), replace(inputs, Y1=Y1), seed=0)

    def test_ensemble_in_seed_order(self, inputs):
        results = train_ensemble(tiny_mfin(max_epochs=1), inputs, [3, 1], n_jobs=2)
        assert [r.model.seed for r in results] == [3, 1]

    @pytest.mark.slow
    def test_learns_planted_signal(self):
        """Validation loss improves by at least a fifth within ten epochs"""
        panel = planted_signal_panel()
        inputs = span_inputs(panel, panel.dates[0], panel.dates[-1])
        config = tiny_mfin(max_epochs=10, early_stopping=10, learning_rate=2e-2)
        n_train, _ = split_train_valid(len(inputs), config.train_valid_split)
        initial = validation_loss(MFIN(config, 1, 2, seed=0), inputs, n_train, config).item()
        result = train(config, inputs, seed=0)
        assert result.epochs_run <= 10
        assert result.best_valid_loss <= initial - 0.2 * abs(initial)

    @pytest.mark.slow
    def test_ensemble_trades_planted_signal_out_of_sample(self):
        """Seed ensemble fitted on the first 450 days earns a positive Sharpe afterwards"""
        panel = planted_signal_panel()
        split = panel.dates[450]
        config = tiny_mfin(max_epochs=10, early_stopping=10, learning_rate=2e-2)
        fitted = span_inputs(panel, panel.dates[0], panel.dates[449])
        results = train_ensemble(config, fitted, [0, 1, 2])
        ensemble = TrainedEnsemble(config, [r.model for r in results])

        weights = ensemble.weights(panel, split, panel.dates[-1])
        realised = span_inputs(panel, split, panel.dates[-1])
        assert list(weights.values.index) == list(realised.dates)
        returns = (weights.values.to_numpy() * realised.Y1).sum(axis=1)
        assert sharpe(returns) > 0
