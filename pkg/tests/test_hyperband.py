"""Tests for the Hyperband schedule and search"""

import math
from types import SimpleNamespace

import pytest

from core.exceptions import ConfigurationError
from schemas.mfin import HyperbandConfig, SearchSpace
from services.ingest import span_inputs
from services.mfin.hyperband import Rung, hyperband_schedule, hyperband_search
from tests.factories import random_walk_panel, tiny_mfin


def as_pairs(schedule):
    return [[(r.trials, r.epochs) for r in bracket] for bracket in schedule]


@pytest.fixture
def small_space():
    return SearchSpace(
        hidden_size=[2, 4],
        n_filters=[2],
        ts_filter_length=[2, 3],
        cost_bps=[0.0],
        correlation_penalty=[0.0],
        dropout_rate=[0.0],
        learning_rate=[1e-2],
    )


@pytest.fixture
def inputs():
    panel = random_walk_panel(n_days=200)
    return span_inputs(panel, panel.dates[0], panel.dates[-1])


class TestSchedule:
    def test_default_brackets(self):
        """R = 10 epochs with eta = 3"""
        assert as_pairs(hyperband_schedule(10, 3)) == [
            [(9, 2), (3, 4), (1, 10)],
            [(5, 4), (1, 10)],
            [(3, 10)],
        ]

    def test_small_budget(self):
        assert as_pairs(hyperband_schedule(3, 3)) == [[(3, 1), (1, 3)], [(2, 3)]]

    def test_single_epoch(self):
        assert hyperband_schedule(1, 3) == [[Rung(trials=1, epochs=1)]]

    def test_every_bracket_ends_at_max_epochs(self):
        for bracket in hyperband_schedule(27, 3):
            assert bracket[-1].epochs == 27
            assert [r.trials for r in bracket] == sorted((r.trials for r in bracket), reverse=True)

    def test_invalid_factor(self):
        with pytest.raises(ConfigurationError):
            hyperband_schedule(10, 1)


class TestSearch:
    def test_single_point_space(self, inputs):
        """Nothing to search: the point is returned untrained"""
        space = SearchSpace(**{k: [v] for k, v in tiny_mfin().tuned().items()})
        result = hyperband_search(space, inputs, tiny_mfin())
        assert result.config == tiny_mfin()
        assert math.isnan(result.valid_loss)
        assert result.trials == []

    def test_result_in_space(self, small_space, inputs):
        hyperband = HyperbandConfig(max_epochs=3, factor=3, max_trials=5)
        result = hyperband_search(small_space, inputs, tiny_mfin(), hyperband, seed=0)
        assert result.config.hidden_size in (2, 4)
        assert result.config.ts_filter_length in (2, 3)
        assert result.config.window == tiny_mfin().window
        assert result.n_configurations <= 5
        assert math.isfinite(result.valid_loss)
        finals = [t.valid_loss for t in result.trials if t.epochs == 3]
        assert result.valid_loss == min(finals)

    def test_deterministic(self, small_space, inputs):
        hyperband = HyperbandConfig(max_epochs=3, factor=3, max_trials=3)
        a = hyperband_search(small_space, inputs, tiny_mfin(), hyperband, seed=4)
        b = hyperband_search(small_space, inputs, tiny_mfin(), hyperband, seed=4)
        assert a.config == b.config
        assert [t.valid_loss for t in a.trials] == [t.valid_loss for t in b.trials]

    def test_dominant_configuration_selected(self, inputs, monkeypatch):
        """The configuration with the lower validation loss at every budget wins"""
        def fake_train(config, inputs, seed=0, max_epochs=None):
            loss = -1.0 / max_epochs if config.hidden_size == 4 else 1.0 / max_epochs
            return SimpleNamespace(best_valid_loss=loss)

        monkeypatch.setattr("services.mfin.hyperband.train", fake_train)
        space = SearchSpace(**{**{k: [v] for k, v in tiny_mfin().tuned().items()}, "hidden_size": [2, 4]})
        result = hyperband_search(space, inputs, tiny_mfin(), HyperbandConfig(max_epochs=3, factor=3), seed=0)
        assert result.config.hidden_size == 4
        assert result.valid_loss == pytest.approx(-1.0 / 3)
        assert {t.params["hidden_size"] for t in result.trials if t.rung == 0} == {2, 4}
