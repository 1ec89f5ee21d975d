"""Tests for rule-based strategy weights, grids and selection"""

import math
import numpy as np
import pytest

from core.exceptions import ConfigurationError, SelectionError
from schemas.config import StrategyConfig
from schemas.strategy import BazParams, Combo, MopParams, RevParams, ScoredCombo, StrategyKind
from services.strategies import (
    baz_weights,
    cmb_weights,
    combo_weights,
    enumerate_grid,
    long_only_weights,
    mop_weights,
    rev_state_machine,
    rev_weights,
    select_top2,
    spread_frame,
)
from tests.factories import make_panel, random_walk_levels, series_from_positions


def scored(feature, sharpe, k=5, kind=StrategyKind.MOP):
    return ScoredCombo(combo=Combo(kind=kind, feature=feature, params=MopParams(k=k)), sharpe=sharpe)


class TestMop:
    """Time-series momentum"""

    def test_signs_and_warm_up(self):
        """Rising levels go long, falling ones short, from the first defined lagged return"""
        n = 10
        levels = np.empty((n, 2, 3))
        levels[:, 0, :] = np.arange(1, n + 1)[:, None]
        levels[:, 1, :] = np.arange(n, 0, -1)[:, None]
        weights = mop_weights(make_panel(levels), "signal", MopParams(k=2)).values
        assert (weights.iloc[:3] == 0).all().all()
        assert (weights["AAA"].iloc[3:] == 1).all()
        assert (weights["BBB"].iloc[3:] == -1).all()

    def test_no_lookahead(self, rng):
        """Weights up to t ignore levels dated t and later"""
        levels = random_walk_levels(rng, (200, 2, 3))
        perturbed = levels.copy()
        perturbed[120:] *= rng.uniform(0.5, 1.5, size=perturbed[120:].shape)
        a = mop_weights(make_panel(levels), "signal", MopParams(k=21)).values
        b = mop_weights(make_panel(perturbed), "signal", MopParams(k=21)).values
        np.testing.assert_array_equal(a.iloc[:121].to_numpy(), b.iloc[:121].to_numpy())
        assert not np.array_equal(a.iloc[121:].to_numpy(), b.iloc[121:].to_numpy())


class TestBaz:
    def test_values_are_signs(self, panel):
        weights = baz_weights(panel, "noise", BazParams(short=8, long=24)).values.to_numpy()
        assert set(np.unique(weights)) <= {-1.0, 0.0, 1.0}
        assert (weights[0] == 0).all()


class TestRev:
    """Spread reversion state machine"""

    @pytest.mark.parametrize(
        "z, expected",
        [
            ([np.nan, 2.0, 1.0, 0.5, -1.8, -1.6, -0.2], [0, -1, -1, 0, 1, 1, 0]),
            ([1.7, 1.76, -2.0, 0.7], [0, -1, -1, 0]),
            ([0.0, 1.74, np.nan, 1.8], [0, 0, 0, -1]),
        ],
    )
    def test_state_machine(self, z, expected):
        """Enter beyond z_u, hold beyond z_l, exit otherwise or on NaN"""
        assert rev_state_machine(np.array(z), 1.75, 0.75).tolist() == expected

    def test_ineligible_assets_are_flat(self, panel):
        """Assets failing the stationarity filter hold no position"""
        weights = rev_weights(panel, "signal", RevParams(k=5, z_upper=1.5, z_lower=0.5), eligible=["AAA"]).values
        assert (weights["BBB"] == 0).all()

    def test_spread(self, panel):
        """delta = r_price^(k) - r_feature^(k)"""
        spread = spread_frame(panel, "signal", 5)
        price = panel.level_frame("open")["AAA"]
        other = panel.level_frame("signal")["AAA"]
        expected = (price / price.shift(5) - 1) - (other / other.shift(5) - 1)
        np.testing.assert_allclose(spread["AAA"].to_numpy()[5:], expected.to_numpy()[5:])


class TestGrid:
    """Feature-parameter grids"""

    def test_sizes(self):
        """Default grids over two features"""
        features = ["hashrate", "tweets"]
        assert len(enumerate_grid(StrategyKind.MOP, features)) == 10
        assert len(enumerate_grid(StrategyKind.BAZ, features)) == 8
        assert len(enumerate_grid(StrategyKind.REV, features)) == 72
        assert all(c.requires_adf for c in enumerate_grid(StrategyKind.REV, features))

    def test_rev_thresholds_filtered(self):
        """Threshold pairs with z_u <= z_l are skipped"""
        config = StrategyConfig(rev_k=[5], rev_z_upper=[1.0, 2.0], rev_z_lower=[1.0, 1.5])
        combos = enumerate_grid(StrategyKind.REV, ["f"], config)
        assert [(c.params.z_upper, c.params.z_lower) for c in combos] == [(2.0, 1.0), (2.0, 1.5)]

    def test_no_grid_for_long_only(self):
        with pytest.raises(ConfigurationError):
            enumerate_grid(StrategyKind.LONG_ONLY, ["f"])

    def test_combo_weights_dispatch(self, panel):
        """Combo weights match the kind's own weight function"""
        combo = Combo(kind=StrategyKind.MOP, feature="noise", params=MopParams(k=5))
        np.testing.assert_array_equal(
            combo_weights(panel, combo).values.to_numpy(),
            mop_weights(panel, "noise", MopParams(k=5)).values.to_numpy(),
        )


class TestSelectTop2:
    """Best combination, then the best on another feature"""

    def test_distinct_features(self):
        selection = select_top2([scored("a", 2.0, 5), scored("a", 1.9, 21), scored("b", 1.0, 5)], window="w")
        assert [p.feature for p in selection.picks] == ["a", "b"]
        assert [p.params for p in selection.picks] == [{"k": 5}, {"k": 5}]
        assert selection.window == "w"

    def test_ties_are_lexicographic(self):
        """Equal scores fall back to (feature, params) order"""
        selection = select_top2([scored("b", 1.0, 5), scored("a", 1.0, 21), scored("a", 1.0, 5)])
        assert selection.picks[0].feature == "a"
        assert selection.picks[0].params == {"k": 5}
        assert selection.picks[1].feature == "b"

    def test_nan_ignored(self):
        selection = select_top2([scored("a", math.nan), scored("b", -0.5), scored("c", -1.0)])
        assert [p.feature for p in selection.picks] == ["b", "c"]

    def test_no_finite_score(self):
        with pytest.raises(SelectionError):
            select_top2([scored("a", math.nan), scored("b", math.nan)])

    def test_single_feature(self):
        """One feature is an error unless a single pick is allowed"""
        grid = [scored("a", 1.0, 5), scored("a", 2.0, 21)]
        with pytest.raises(SelectionError):
            select_top2(grid)
        selection = select_top2(grid, allow_single=True)
        assert selection.single_feature
        assert len(selection.picks) == 1
        assert selection.picks[0].params == {"k": 21}


class TestCombinations:
    def test_long_only(self, panel):
        weights = long_only_weights(panel)
        assert (weights.values == 1.0).all().all()
        assert weights.label == "Long-only"

    def test_cmb_of_identical_components(self, rng):
        """Averaging a portfolio with itself reproduces it"""
        s = series_from_positions(rng.normal(size=(50, 2)), rng.normal(0, 0.01, size=(50, 2)))
        combined = cmb_weights([s, s])
        np.testing.assert_allclose(combined.positions.to_numpy(), s.positions.to_numpy())
        np.testing.assert_allclose(combined.gross.to_numpy(), s.gross.to_numpy())
        assert combined.label == "CMB"
