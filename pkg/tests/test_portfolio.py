"""Tests for volatility targeting, costs and portfolio combination"""

import numpy as np
import pandas as pd
import pytest

from core.exceptions import AlignmentError, DataIntegrityError
from models.portfolio import Stage, VolEstimate, WeightsMatrix
from services.metrics import vol
from services.portfolio import (
    combine_portfolios,
    concat_series,
    ensemble_average,
    estimate_asset_vol,
    mask_undefined_vol,
    portfolio_multiplier,
    portfolio_returns,
    restrict,
    second_layer_scale,
    with_cost,
)
from services.strategies import long_only_weights
from tests.factories import make_panel, random_walk_levels, series_from_positions

DATES = pd.date_range("2020-01-01", periods=4, freq="D", name="date")
COLUMNS = ["AAA", "BBB"]


def hand_example(cost_bps=10.0):
    weights = WeightsMatrix(pd.DataFrame([[1, -1], [1, 1], [0, 1]], index=DATES[:3], columns=COLUMNS, dtype=float))
    returns = pd.DataFrame(
        [[0.0, 0.0], [0.01, 0.02], [-0.01, 0.0], [0.03, -0.02]], index=DATES, columns=COLUMNS
    )
    sigma = VolEstimate(asset_vol=pd.DataFrame([[0.5, 0.25]] * 4, index=DATES, columns=COLUMNS))
    return portfolio_returns(weights, returns, sigma, cost_bps=cost_bps)


class TestPortfolioReturns:
    """Asset-level volatility scaling"""

    def test_hand_computed(self):
        """gross = sigma/N sum P r, net subtracts C |dP| from flat"""
        series = hand_example()
        assert list(series.dates) == list(DATES[1:])
        np.testing.assert_allclose(series.positions.to_numpy(), [[2, -4], [2, 4], [0, 4]])
        np.testing.assert_allclose(series.turnover.to_numpy(), [6.0, 8.0, 2.0])
        np.testing.assert_allclose(series.gross.to_numpy(), [-0.0045, -0.0015, -0.006])
        np.testing.assert_allclose(series.net.to_numpy(), [-0.00495, -0.0021, -0.00615])
        assert series.stage == Stage.ASSET_SCALED

    def test_zero_cost(self):
        series = hand_example(cost_bps=0.0)
        np.testing.assert_array_equal(series.net.to_numpy(), series.gross.to_numpy())

    def test_undefined_vol(self):
        """A non-zero weight needs a defined volatility"""
        weights = WeightsMatrix(pd.DataFrame(1.0, index=DATES[:3], columns=COLUMNS))
        returns = pd.DataFrame(0.01, index=DATES, columns=COLUMNS)
        sigma = VolEstimate(asset_vol=pd.DataFrame([[np.nan, 0.2]] + [[0.2, 0.2]] * 3, index=DATES, columns=COLUMNS))
        with pytest.raises(DataIntegrityError):
            portfolio_returns(weights, returns, sigma)
        masked = mask_undefined_vol(weights, sigma)
        assert masked.values.iloc[0].tolist() == [0.0, 1.0]
        assert len(portfolio_returns(masked, returns, sigma)) == 3

    def test_gaps_rejected(self):
        """Decision dates must be consecutive"""
        weights = WeightsMatrix(pd.DataFrame(1.0, index=DATES[[0, 2]], columns=COLUMNS))
        returns = pd.DataFrame(0.01, index=DATES, columns=COLUMNS)
        sigma = VolEstimate(asset_vol=pd.DataFrame(0.2, index=DATES, columns=COLUMNS))
        with pytest.raises(AlignmentError):
            portfolio_returns(weights, returns, sigma)

    def test_weight_bounds(self):
        """Weights outside [-1, 1] are rejected"""
        with pytest.raises(DataIntegrityError):
            WeightsMatrix(pd.DataFrame(1.5, index=DATES, columns=COLUMNS))


class TestSecondLayer:
    """Portfolio-level volatility scaling"""

    def test_warm_up_multiplier(self, rng):
        """Points without 21 prior returns pass through with multiplier 1"""
        gross = pd.Series(rng.normal(0, 0.01, 60), index=pd.date_range("2020-01-01", periods=60))
        multiplier, warmup, degenerate = portfolio_multiplier(gross)
        assert warmup.iloc[:21].all() and not warmup.iloc[21:].any()
        assert (multiplier.iloc[:21] == 1.0).all()
        assert not degenerate.any()
        expected = 0.15 / (gross.iloc[:21].ewm(span=21, min_periods=21).std().iloc[-1] * np.sqrt(252))
        assert multiplier.iloc[21] == pytest.approx(expected)

    def test_scales_gross_linearly(self, rng):
        """Doubly-scaled gross returns are the multiplier times the asset-level ones"""
        s = series_from_positions(rng.normal(size=(80, 2)), rng.normal(0, 0.01, size=(80, 2)))
        doubly = second_layer_scale(s)
        np.testing.assert_allclose(doubly.gross.to_numpy(), (doubly.scale_factor * s.gross).to_numpy(), rtol=1e-12)
        assert doubly.stage == Stage.DOUBLY_SCALED
        assert doubly.warmup.iloc[:21].all()

    def test_flat_gross(self):
        """Zero portfolio volatility is flagged and passed through"""
        s = series_from_positions(np.zeros((40, 2)), np.zeros((40, 2)))
        doubly = second_layer_scale(s)
        assert (doubly.scale_factor == 1.0).all()
        assert doubly.warmup.all()

    def test_vol_target(self):
        """Doubly-scaled long-only on iid returns realises about 15% volatility"""
        rng = np.random.default_rng(7)
        levels = random_walk_levels(rng, (2000, 3, 1), vol=0.03)
        panel = make_panel(levels, ("A", "B", "C"), ("open",))
        sigma = estimate_asset_vol(panel)
        weights = mask_undefined_vol(long_only_weights(panel).loc(None, panel.dates[-2]), sigma)
        asset_level = portfolio_returns(weights, panel.return_frame("open"), sigma)
        realised = vol(second_layer_scale(asset_level).net.iloc[100:])
        assert 0.12 <= realised <= 0.18


class TestCosts:
    """Cost recharging, sub-periods and chaining"""

    def test_with_cost_monotone(self, rng):
        """Higher cost never raises any day's net return"""
        s = series_from_positions(rng.normal(size=(50, 2)), rng.normal(0, 0.01, size=(50, 2)))
        low, high = with_cost(s, 2.5), with_cost(s, 10.0)
        assert (high.net <= low.net).all()
        np.testing.assert_array_equal(low.gross.to_numpy(), high.gross.to_numpy())

    def test_restrict_enters_from_flat(self, rng):
        """The first row of a sub-period pays for the whole position"""
        s = series_from_positions(rng.normal(size=(30, 2)), rng.normal(0, 0.01, size=(30, 2)))
        sub = restrict(s, s.dates[10], s.dates[19])
        assert len(sub) == 10
        assert sub.turnover.iloc[0] == pytest.approx(s.positions.iloc[10].abs().sum())
        np.testing.assert_allclose(sub.turnover.iloc[1:].to_numpy(), s.turnover.iloc[11:20].to_numpy())

    def test_concat(self, rng):
        """Consecutive pieces chain; overlapping pieces are rejected"""
        s = series_from_positions(rng.normal(size=(30, 2)), rng.normal(0, 0.01, size=(30, 2)))
        first, second = restrict(s, None, s.dates[14]), restrict(s, s.dates[15], None)
        chained = concat_series([first, second])
        np.testing.assert_allclose(chained.net.to_numpy(), s.net.to_numpy())
        with pytest.raises(AlignmentError):
            concat_series([second, first])


class TestCombination:
    def test_mean_of_gross(self, rng):
        """Combined gross is the mean of the component gross returns"""
        returns = rng.normal(0, 0.01, size=(40, 2))
        a = series_from_positions(rng.normal(size=(40, 2)), returns)
        b = series_from_positions(rng.normal(size=(40, 2)), returns)
        combined = combine_portfolios([a, b])
        np.testing.assert_allclose(combined.gross.to_numpy(), ((a.gross + b.gross) / 2).to_numpy())

    def test_shared_dates_only(self, rng):
        returns = rng.normal(0, 0.01, size=(40, 2))
        a = series_from_positions(rng.normal(size=(40, 2)), returns)
        b = restrict(a, a.dates[10], None)
        assert len(combine_portfolios([a, b])) == 30

    def test_ensemble_average(self):
        """Seed weights are averaged per (date, asset)"""
        a = WeightsMatrix(pd.DataFrame([[1.0, -0.5]] * 3, index=DATES[:3], columns=COLUMNS))
        b = WeightsMatrix(pd.DataFrame([[0.0, 0.5]] * 3, index=DATES[:3], columns=COLUMNS))
        mean = ensemble_average([a, b])
        assert mean.values.iloc[0].tolist() == [0.5, 0.0]
        with pytest.raises(AlignmentError):
            ensemble_average([a, WeightsMatrix(a.values.iloc[:2])])
